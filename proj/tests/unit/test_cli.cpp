// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "epr/io.hpp"
#include "support.hpp"

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EPR_CLI_PATH) + " -q " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("command-line exit codes") {
  epr::testing::TempDir dir("cli");
  epr::write_text_atomic(dir / "spec.json",
                         R"({"n_classes": 2, "utterances_per_class": 3, "min_segments": 2, "max_segments": 3})");
  CHECK(run_cli("gen-data -s " + dir / "spec.json" + " -o " + dir / "store") == 0);
  CHECK(run_cli("--describe") == 0);
  CHECK(run_cli("run --describe --mode sEPR") == 0);
  CHECK(run_cli("--describe --mode bogus") == 2);
  CHECK(run_cli("run --no-such-flag") == 2);
  epr::write_text_atomic(dir / "bad.json", R"({"train": {"batch_size": 0}})");
  CHECK(run_cli("run -c " + dir / "bad.json") == 2);
  CHECK(run_cli("gen-data -s " + dir / "bad.json" + " -o " + dir / "x") == 2);
  CHECK(run_cli("run --store " + dir / "missing" + " -o " + dir / "out") == 3);
  CHECK(run_cli("eval -r " + dir / "missing") == 3);
  epr::write_text_atomic(dir / "m.csv", "utterance_id,path,label,speaker\nu1,nothing.wav,a,s\n");
  CHECK(run_cli("featurize -m " + dir / "m.csv" + " -o " + dir / "f") == 3);
}
