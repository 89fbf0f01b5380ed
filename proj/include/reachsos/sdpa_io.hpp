// Sparse SDPA (.dat-s) export/import for SdpProblem.
//
// The problem  min <C,X>  s.t. <A_i,X> = b_i, X >= 0  is written as the SDPA
// dual: F_i = A_i, c_i = b_i, F_0 = -C.  Free variables are split into a
// trailing diagonal block (v = v+ - v-).  Two structured comment lines
// ("*REACHSOS ...") record the log-det term and the free-variable split so
// that read_sdpa can reconstruct the original problem exactly; third-party
// readers ignore them.
#pragma once

#include <iosfwd>
#include <string>

#include "reachsos/sdp.hpp"

namespace reachsos {

std::string write_sdpa(const SdpProblem& problem);
void write_sdpa_file(const SdpProblem& problem, const std::string& path);

SdpProblem read_sdpa(const std::string& text);
SdpProblem read_sdpa_file(const std::string& path);

}  // namespace reachsos
