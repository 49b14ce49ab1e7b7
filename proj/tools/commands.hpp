#pragma once

#include <string>
#include <vector>

namespace polybert::cli {

/// Routes argv to a subcommand. Exit codes: 0 success, 1 usage error,
/// 2 runtime error.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);  // without argv[0]

/// The bundled end-to-end pipeline: synthesize a bilingual corpus, filter,
/// build a vocab, pre-train teacher and student, fine-tune a token task,
/// compare each vs all, render the report. Nonzero exit names the failing
/// stage on stderr.
int end_to_end_smoke(const std::string& workdir, std::uint64_t seed);

}  // namespace polybert::cli
