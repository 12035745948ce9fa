#include "cdnd/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "cdnd/errors.hpp"

namespace cdnd {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct ParseContext {
  std::string origin;
  std::size_t line = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(origin + ":" + std::to_string(line) + ": " + what);
  }
};

double parse_double(const ParseContext& ctx, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) ctx.fail("trailing characters in number '" + v + "'");
    return out;
  } catch (const IoError&) {
    throw;
  } catch (const std::exception&) {
    ctx.fail("cannot parse number '" + v + "'");
  }
}

long parse_int(const ParseContext& ctx, const std::string& v) {
  long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    ctx.fail("cannot parse integer '" + v + "'");
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const ParseContext& ctx, const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const std::string& item : split_list(v))
    out.push_back(static_cast<std::uint64_t>(parse_int(ctx, item)));
  return out;
}

std::vector<std::size_t> parse_size_list(const ParseContext& ctx, const std::string& v) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(v)) {
    const long parsed = parse_int(ctx, item);
    if (parsed < 1) ctx.fail("width must be positive: '" + item + "'");
    out.push_back(static_cast<std::size_t>(parsed));
  }
  return out;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
  RunConfig config;
  ParseContext ctx{origin, 0};
  std::istringstream in(text);
  std::string raw;
  std::string section;
  while (std::getline(in, raw)) {
    ++ctx.line;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') ctx.fail("malformed section header");
      section = line.substr(1, line.size() - 2);
      if (section != "train" && section != "weights" && section != "deform" &&
          section != "shift" && section != "data")
        ctx.fail("unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) ctx.fail("expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) ctx.fail("key '" + key + "' outside any section");

    if (section == "train") {
      if (key == "learning_rate") config.train.learning_rate = parse_double(ctx, value);
      else if (key == "epochs") config.train.epochs = static_cast<int>(parse_int(ctx, value));
      else if (key == "batch_size") config.train.batch_size = static_cast<int>(parse_int(ctx, value));
      else if (key == "grl_lambda") config.train.grl_lambda = parse_double(ctx, value);
      else if (key == "alignment") {
        if (value == "none") config.train.alignment = Alignment::kNone;
        else if (value == "nwd") config.train.alignment = Alignment::kNwd;
        else if (value == "dnwd") config.train.alignment = Alignment::kDnwd;
        else ctx.fail("alignment must be none|nwd|dnwd");
      } else if (key == "seeds") {
        config.train.seeds = parse_u64_list(ctx, value);
        if (config.train.seeds.empty()) ctx.fail("seeds list is empty");
      } else if (key == "shuffle_seed") {
        config.train.shuffle_seed = static_cast<std::uint64_t>(parse_int(ctx, value));
      } else if (key == "encoder_widths") {
        config.train.encoder.widths = parse_size_list(ctx, value);
      } else if (key == "classifier_hidden") {
        config.train.classifier_hidden = parse_size_list(ctx, value);
      } else if (key == "decoder_hidden") {
        config.train.decoder_hidden = parse_size_list(ctx, value);
      } else {
        ctx.fail("unknown key '" + key + "' in [train]");
      }
    } else if (section == "weights") {
      if (key == "alpha") config.train.weights.alpha = parse_double(ctx, value);
      else if (key == "gamma") config.train.weights.gamma = parse_double(ctx, value);
      else if (key == "beta1") config.train.weights.beta1 = parse_double(ctx, value);
      else if (key == "beta2") config.train.weights.beta2 = parse_double(ctx, value);
      else ctx.fail("unknown key '" + key + "' in [weights]");
    } else if (section == "deform") {
      if (key == "k") config.train.deform.k = static_cast<int>(parse_int(ctx, value));
      else if (key == "m") config.train.deform.m = static_cast<int>(parse_int(ctx, value));
      else if (key == "n_deform") config.train.deform.n_deform = static_cast<int>(parse_int(ctx, value));
      else if (key == "mode") {
        if (value == "lowest") config.train.deform.mode = DeformMode::kLowest;
        else if (value == "highest") config.train.deform.mode = DeformMode::kHighest;
        else if (value == "random") config.train.deform.mode = DeformMode::kRandom;
        else ctx.fail("mode must be lowest|highest|random");
      } else if (key == "statistic") {
        if (value == "entropy") config.train.deform.statistic = DiversityStatistic::kEntropy;
        else if (value == "std") config.train.deform.statistic = DiversityStatistic::kStd;
        else ctx.fail("statistic must be entropy|std");
      } else if (key == "variance") {
        config.train.deform.variance = parse_double(ctx, value);
      } else if (key == "curvature_neighborhood") {
        config.train.deform.curvature_neighborhood = static_cast<int>(parse_int(ctx, value));
      } else if (key == "fps_start") {
        if (value == "index_zero") config.train.deform.fps_start = FpsStart::kIndexZero;
        else if (value == "seeded_random") config.train.deform.fps_start = FpsStart::kSeededRandom;
        else ctx.fail("fps_start must be index_zero|seeded_random");
      } else {
        ctx.fail("unknown key '" + key + "' in [deform]");
      }
    } else if (section == "shift") {
      if (key == "jitter_sigma") config.shift.jitter_sigma = parse_double(ctx, value);
      else if (key == "crop_fraction") config.shift.crop_fraction = parse_double(ctx, value);
      else if (key == "density_bias") config.shift.density_bias = parse_double(ctx, value);
      else if (key == "rotation") {
        if (value == "none") config.shift.rotation = ShiftRotation::kNone;
        else if (value == "z-random") config.shift.rotation = ShiftRotation::kZRandom;
        else ctx.fail("rotation must be none|z-random");
      } else {
        ctx.fail("unknown key '" + key + "' in [shift]");
      }
    } else {  // data
      if (key == "dataset_dir") config.dataset_dir = value;
      else if (key == "source_domain") config.source_domain = value;
      else if (key == "target_domain") config.target_domain = value;
      else ctx.fail("unknown key '" + key + "' in [data]");
    }
  }
  return config;
}

RunConfig parse_run_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config_text(text.str(), path.string());
}

std::string render_run_config(const RunConfig& config) {
  std::ostringstream out;
  const TrainConfig& t = config.train;
  out << "[train]\n";
  out << "learning_rate=" << format_double(t.learning_rate) << "\n";
  out << "epochs=" << t.epochs << "\n";
  out << "batch_size=" << t.batch_size << "\n";
  out << "grl_lambda=" << format_double(t.grl_lambda) << "\n";
  out << "alignment=" << alignment_name(t.alignment) << "\n";
  out << "seeds=";
  for (std::size_t i = 0; i < t.seeds.size(); ++i) out << (i ? "," : "") << t.seeds[i];
  out << "\n";
  out << "shuffle_seed=" << t.shuffle_seed << "\n";
  out << "encoder_widths=";
  for (std::size_t i = 0; i < t.encoder.widths.size(); ++i)
    out << (i ? "," : "") << t.encoder.widths[i];
  out << "\n";
  out << "classifier_hidden=";
  for (std::size_t i = 0; i < t.classifier_hidden.size(); ++i)
    out << (i ? "," : "") << t.classifier_hidden[i];
  out << "\n";
  out << "decoder_hidden=";
  for (std::size_t i = 0; i < t.decoder_hidden.size(); ++i)
    out << (i ? "," : "") << t.decoder_hidden[i];
  out << "\n";
  out << "\n[weights]\n";
  out << "alpha=" << format_double(t.weights.alpha) << "\n";
  out << "gamma=" << format_double(t.weights.gamma) << "\n";
  out << "beta1=" << format_double(t.weights.beta1) << "\n";
  out << "beta2=" << format_double(t.weights.beta2) << "\n";
  out << "\n[deform]\n";
  out << "k=" << t.deform.k << "\n";
  out << "m=" << t.deform.m << "\n";
  out << "n_deform=" << t.deform.n_deform << "\n";
  out << "mode="
      << (t.deform.mode == DeformMode::kLowest
              ? "lowest"
              : (t.deform.mode == DeformMode::kHighest ? "highest" : "random"))
      << "\n";
  out << "statistic=" << (t.deform.statistic == DiversityStatistic::kEntropy ? "entropy" : "std")
      << "\n";
  out << "variance=" << format_double(t.deform.variance) << "\n";
  out << "curvature_neighborhood=" << t.deform.curvature_neighborhood << "\n";
  out << "fps_start="
      << (t.deform.fps_start == FpsStart::kIndexZero ? "index_zero" : "seeded_random") << "\n";
  out << "\n[shift]\n";
  out << "jitter_sigma=" << format_double(config.shift.jitter_sigma) << "\n";
  out << "crop_fraction=" << format_double(config.shift.crop_fraction) << "\n";
  out << "density_bias=" << format_double(config.shift.density_bias) << "\n";
  out << "rotation=" << (config.shift.rotation == ShiftRotation::kZRandom ? "z-random" : "none")
      << "\n";
  out << "\n[data]\n";
  out << "dataset_dir=" << config.dataset_dir << "\n";
  out << "source_domain=" << config.source_domain << "\n";
  out << "target_domain=" << config.target_domain << "\n";
  return out.str();
}

}  // namespace cdnd
