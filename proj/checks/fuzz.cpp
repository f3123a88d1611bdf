#include <algorithm>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string_view>

#include "mmf/checks.hpp"
#include "mmf/config.hpp"
#include "mmf/errors.hpp"
#include "mmf/io.hpp"
#include "mmf/synth.hpp"

namespace mmf::checks {
namespace {

using Bytes = std::string;

std::span<const std::byte> as_bytes(const Bytes& b) {
  return {reinterpret_cast<const std::byte*>(b.data()), b.size()};
}

Bytes from_bytes(const std::vector<std::byte>& v) { return {reinterpret_cast<const char*>(v.data()), v.size()}; }

using namespace std::string_view_literals;

constexpr std::string_view kTokens[] = {
    "nan"sv, "inf"sv, "-inf"sv, "-1"sv, "0"sv, "1e999"sv, "-1e-999"sv, "4294967296"sv, "18446744073709551617"sv,
    "\n"sv, "\r\n"sv, ":"sv, " "sv, "\t"sv, "{"sv, "}"sv, "["sv, "]"sv, "\""sv, ","sv, "null"sv, "true"sv,
    "P2:"sv, "Tr_velo_to_cam:"sv, "IMG_SIZE:"sv, "\"shape\""sv, "\"layer_sizes\""sv, "\xff\xff\xff\x7f"sv,
    "\x00\x00\x00\x00"sv, "\xff\xff\xff\xff"sv};

void mutate_once(Bytes& b, Rng& rng) {
  auto pos = [&](std::size_t extra) {
    return static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(b.size() + extra) - 1));
  };
  switch (rng.integer(0, 7)) {
    case 0:  // bit flip
      if (!b.empty()) b[pos(0)] ^= static_cast<char>(1 << rng.integer(0, 7));
      break;
    case 1:  // random byte
      if (!b.empty()) b[pos(0)] = static_cast<char>(rng.integer(0, 255));
      break;
    case 2: {  // insert random bytes
      Bytes ins(static_cast<std::size_t>(rng.integer(1, 8)), '\0');
      for (auto& c : ins) c = static_cast<char>(rng.integer(0, 255));
      b.insert(pos(1), ins);
      break;
    }
    case 3:  // delete a range
      if (!b.empty()) {
        const auto at = pos(0);
        b.erase(at, static_cast<std::size_t>(rng.integer(1, 16)));
      }
      break;
    case 4:  // truncate
      b.resize(pos(1));
      break;
    case 5:  // duplicate a range
      if (!b.empty()) {
        const auto at = pos(0);
        const auto len = std::min<std::size_t>(b.size() - at, static_cast<std::size_t>(rng.integer(1, 32)));
        b.insert(pos(1), b.substr(at, len));
      }
      break;
    case 6:  // splice a token
      b.insert(pos(1), kTokens[rng.integer(0, std::ssize(kTokens) - 1)]);
      break;
    default: {  // overwrite a run of digits with a token
      if (b.empty()) break;
      auto at = pos(0);
      while (at < b.size() && !std::isdigit(static_cast<unsigned char>(b[at]))) ++at;
      if (at == b.size()) break;
      auto end = at;
      while (end < b.size() && (std::isdigit(static_cast<unsigned char>(b[end])) || b[end] == '.' || b[end] == 'e')) ++end;
      b.replace(at, end - at, kTokens[rng.integer(0, 8)]);
      break;
    }
  }
}

std::size_t line_count(const Bytes& b) { return static_cast<std::size_t>(std::count(b.begin(), b.end(), '\n')) + 1; }

struct Target {
  Bytes seed;
  // Optional second document (raw-grid payload); mutated alongside the first.
  Bytes aux;
  std::function<void(const Bytes&, const Bytes&)> parse;
  bool config_errors_ok = false;
};

Target make_target(const std::string& parser) {
  Rng rng(97);
  Target t;
  if (parser == "point_cloud") {
    std::vector<LidarPoint> pts(64);
    for (auto& p : pts) p = {{rng.uniform(0, 50), rng.uniform(-20, 20), rng.uniform(-2, 1)}, float(rng.uniform())};
    t.seed = from_bytes(serialize_point_cloud(pts));
    t.parse = [](const Bytes& b, const Bytes&) { parse_point_cloud(as_bytes(b)); };
  } else if (parser == "labels") {
    const auto calib = default_synthetic_calibration();
    SceneSpec s;
    s.seed = 3;
    std::vector<LabelRecord> labels;
    for (const auto& o : synth_scene(s, calib).labels) labels.push_back(object_to_label(o, calib, 0.75));
    labels.push_back(object_to_label(synth_scene(s, calib).labels[0], calib));
    t.seed = serialize_labels(labels);
    t.parse = [](const Bytes& b, const Bytes&) { parse_labels(b); };
  } else if (parser == "calibration") {
    t.seed = serialize_calibration(default_synthetic_calibration());
    t.parse = [](const Bytes& b, const Bytes&) { parse_calibration(b); };
  } else if (parser == "raw_grid") {
    t.seed = R"({"shape": [2, 3, 4], "axis_order": "z,y,x", "dtype": "float32", "byte_order": "little"})";
    std::vector<float> v(24);
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    t.aux.assign(reinterpret_cast<const char*>(v.data()), v.size() * 4);
    t.parse = [](const Bytes& side, const Bytes& payload) { parse_raw_grid(side, as_bytes(payload)); };
  } else if (parser == "mlp") {
    t.seed = from_bytes(serialize_mlp(FusionMLP::random({7, 8, 4}, 5)));
    t.parse = [](const Bytes& b, const Bytes&) { parse_mlp(as_bytes(b)); };
  } else if (parser == "png") {
    auto d = DenseDepthImage::filled(12, 16, 0.0f);
    for (auto& x : d.depth) x = rng.uniform() < 0.3 ? 0.0f : static_cast<float>(rng.uniform(1, 80));
    t.seed = from_bytes(encode_depth_png(d));
    t.parse = [](const Bytes& b, const Bytes&) { decode_depth_png(as_bytes(b)); };
  } else if (parser == "config") {
    t.seed = config_to_json(PipelineConfig{}).dump(1);
    t.parse = [](const Bytes& b, const Bytes&) { parse_config(b); };
    t.config_errors_ok = true;
  } else {
    throw InvalidInput("unknown fuzz target '" + parser + "'");
  }
  return t;
}

}  // namespace

CheckResult check_fuzz_parser(const std::string& parser, int inputs, std::uint64_t seed) {
  const Target t = make_target(parser);
  Rng rng(seed);
  int accepted = 0, positioned = 0, failures = 0;
  std::string first_failure;
  for (int i = 0; i < inputs; ++i) {
    Bytes doc = t.seed, aux = t.aux;
    const int rounds = static_cast<int>(rng.integer(1, 4));
    for (int r = 0; r < rounds; ++r) {
      if (!aux.empty() && rng.uniform() < 0.3) {
        mutate_once(aux, rng);
      } else {
        mutate_once(doc, rng);
      }
    }
    std::string bad;
    try {
      t.parse(doc, aux);
      ++accepted;
    } catch (const ParseError& e) {
      // Raw-grid payload errors are positioned within the payload, the rest within the document.
      const std::size_t limit = e.source().ends_with(".json") || aux.empty() ? doc.size() : aux.size();
      const bool ok = (e.unit() == ParseError::Unit::kByte && e.position() <= std::max(limit, doc.size())) ||
                      (e.unit() == ParseError::Unit::kLine && e.position() >= 1 && e.position() <= line_count(doc) + 1);
      if (ok) {
        ++positioned;
      } else {
        bad = std::string("unpositioned: ") + e.what();
      }
    } catch (const ConfigError& e) {
      if (t.config_errors_ok) {
        ++positioned;
      } else {
        bad = std::string("ConfigError: ") + e.what();
      }
    } catch (const std::exception& e) {
      bad = std::string("unexpected exception: ") + e.what();
    }
    if (!bad.empty()) {
      if (failures++ == 0) first_failure = bad.substr(0, 120);
    }
  }
  char d[256];
  std::snprintf(d, sizeof d, "%d inputs: %d accepted, %d positioned errors, %d failures%s%s", inputs, accepted,
                positioned, failures, failures ? "; first: " : "", first_failure.c_str());
  return {"fuzz " + parser, failures == 0, static_cast<double>(failures), 0.0, d};
}

std::vector<CheckResult> run_fuzz_suite(int inputs, std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::uint64_t k = 0;
  for (const char* p : {"point_cloud", "labels", "calibration", "raw_grid", "mlp", "png", "config"}) {
    out.push_back(check_fuzz_parser(p, inputs, mix_seed(seed, ++k)));
  }
  return out;
}

}  // namespace mmf::checks
