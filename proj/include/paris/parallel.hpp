#pragma once

namespace paris::par {

// Execution mode for the numeric kernels. The OpenMP path and the serial
// path compute bit-identical results: every output element is reduced by a
// single thread in a fixed order, so the mode only changes wall time.
enum class Mode { serial, openmp };

Mode mode();
void set_mode(Mode m);
inline bool on() { return mode() == Mode::openmp; }

int threads();
void set_threads(int n);

} // namespace paris::par
