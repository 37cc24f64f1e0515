// End-to-end checks of the coordflow CLI. argv[1] is the binary path.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "coordflow/codec.hpp"
#include "coordflow/serialize.hpp"
#include "coordflow/video.hpp"

namespace fs = std::filesystem;
using namespace coordflow;

namespace {

int g_failures = 0;

void check(bool ok, const std::string& what) {
  std::printf("[%s] %s\n", ok ? "ok" : "FAIL", what.c_str());
  if (!ok) ++g_failures;
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_test <coordflow-binary>\n");
    return 2;
  }
  const std::string bin = argv[1];
  const fs::path work = fs::temp_directory_path() / "cf_cli_test";
  fs::remove_all(work);
  fs::create_directories(work);

  // small synthetic clip as PNG frames
  SyntheticSpec spec;
  spec.width = 16;
  spec.height = 16;
  spec.frames = 6;
  spec.seed = 5;
  spec.background.kind = MotionPath::Kind::constant;
  spec.background.step_x = 0.5f;
  SyntheticVideo sv = make_synthetic(spec);
  const std::string frames = (work / "frames").string();
  save_video(sv.video, frames);

  const std::string bs1 = (work / "a.cfv").string();
  const std::string bs2 = (work / "b.cfv").string();
  const std::string encode_flags =
      " --preset tiny --layers 2 --epochs 2 --batch 512 --seed 9 --threads 1";

  check(run(bin + " encode -i " + frames + " -o " + bs1 + encode_flags) == 0,
        "encode exits 0");
  check(fs::exists(bs1), "bitstream written");
  check(fs::exists(bs1 + ".metrics.csv"), "metrics csv written");

  check(run(bin + " encode -i " + frames + " -o " + bs2 + encode_flags) == 0,
        "second encode exits 0");
  check(read_file(bs1) == read_file(bs2), "same seed gives identical bitstreams");
  check(read_file(bs1 + ".metrics.csv") == read_file(bs2 + ".metrics.csv"),
        "same seed gives identical metrics csv");

  check(run(bin + " info -i " + bs1) == 0, "info exits 0");
  check(run(bin + " info -i " + bs1 + " --json") == 0, "info --json exits 0");
  check(run(bin + " eval -i " + bs1 + " --video " + frames) == 0, "eval exits 0");

  const std::string decoded = (work / "decoded").string();
  check(run(bin + " decode -i " + bs1 + " -o " + decoded) == 0, "decode exits 0");
  VideoVolume dec = load_video(decoded);
  check(dec.width == 16 && dec.height == 16 && dec.frames == 6,
        "decoded frame count and size match the header");

  const std::string up = (work / "up").string();
  check(run(bin + " upsample -i " + bs1 + " -o " + up + " --scale 2") == 0,
        "upsample exits 0");
  VideoVolume upv = load_video(up);
  check(upv.width == 32 && upv.height == 32, "--scale 2 doubles the resolution");

  const std::string seg = (work / "seg").string();
  check(run(bin + " segment -i " + bs1 + " -o " + seg) == 0, "segment exits 0");
  check(fs::exists(fs::path(seg) / "seg_000000.png"), "segmentation written");

  const std::string inp = (work / "inpaint").string();
  check(run(bin + " inpaint -i " + bs1 + " --layer 0 -o " + inp) == 0,
        "inpaint exits 0");

  const std::string stab = (work / "stab").string();
  check(run(bin + " stabilize -i " + bs1 + " -o " + stab + " --window 1") == 0,
        "stabilize exits 0");
  VideoVolume stabbed = load_video(stab);
  check(stabbed.rgb == dec.rgb, "stabilize --window 1 matches decode bit for bit");

  // frozen-flow ablation is visible in the decoded model
  const std::string bs3 = (work / "c.cfv").string();
  check(run(bin + " encode -i " + frames + " -o " + bs3 + encode_flags +
            " --ablation no_layers_no_flow") == 0,
        "ablation encode exits 0");
  CoordFlowModel frozen = unpack(load_bitstream(bs3));
  check(frozen.n_layers() == 1, "no_layers_no_flow gives a single layer");
  check(frozen.layers[0].flow.frozen_identity, "flow is frozen at identity");

  check(run(bin + " decode -i /nonexistent.cfv -o " + decoded) != 0,
        "missing input exits nonzero");
  check(run(bin + " encode --bogus-flag x") != 0, "unknown flags are rejected");
  check(run(bin + " --help") == 0, "--help exits 0");
  check(run(bin + " encode --help") == 0, "encode --help exits 0");

  fs::remove_all(work);
  std::printf("%s\n", g_failures == 0 ? "ALL OK" : "FAILURES PRESENT");
  return g_failures == 0 ? 0 : 1;
}
