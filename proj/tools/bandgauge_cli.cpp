#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bandgauge/bandgauge.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace bandgauge;

namespace {

constexpr int kExitOk = 0, kExitInput = 1, kExitNumeric = 2;

bool g_quiet = false;

void log(const std::string& msg) {
  if (!g_quiet) std::cerr << "bandgauge: " << msg << '\n';
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Layered configuration: flag > JSON file > default. Keys in the file are the
// long flag names with '-' replaced by '_'.

struct Layers {
  json file = json::object();

  template <class T>
  T get(const std::optional<T>& flag, const std::string& key, T fallback) const {
    if (flag) return *flag;
    if (file.contains(key)) {
      try {
        return file.at(key).get<T>();
      } catch (const json::exception& e) {
        fail_input("config key '" + key + "': " + e.what());
      }
    }
    return fallback;
  }
};

Layers load_layers(const std::string& path) {
  Layers l;
  if (path.empty()) return l;
  std::ifstream in(path);
  if (!in) fail_input("cannot read config " + path);
  try {
    l.file = json::parse(in);
  } catch (const json::exception& e) {
    fail_input("config " + path + ": " + e.what());
  }
  if (!l.file.is_object()) fail_input("config " + path + ": top level must be an object");
  return l;
}

unsigned resolve_threads(const std::optional<unsigned>& flag, const Layers& cfg) {
  if (flag) return std::max(1u, *flag);
  if (const char* env = std::getenv("BANDGAUGE_THREADS"); env && *env) {
    unsigned v = 0;
    const auto* end = env + std::strlen(env);
    if (std::from_chars(env, end, v).ptr != end || v == 0) fail_input(std::string("BANDGAUGE_THREADS is not a positive integer: ") + env);
    return v;
  }
  return std::max(1u, cfg.get<unsigned>(std::nullopt, "threads", 1u));
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    fail_input(source + ": missing column '" + name + "'");
  }
  [[noreturn]] void fail(std::size_t row, const std::string& msg) const {
    fail_input(source + ":" + std::to_string(lines[row]) + ": " + msg);
  }
  double number(std::size_t row, std::size_t col) const {
    const auto& s = rows[row][col];
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
      fail(row, "'" + header[col] + "' is not a finite number: '" + s + "'");
    return v;
  }
  int integer(std::size_t row, std::size_t col) const {
    const auto& s = rows[row][col];
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(row, "'" + header[col] + "' is not an integer: '" + s + "'");
    return v;
  }
};

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
      else if (c == '"') quoted = false;
      else cur += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

CsvTable read_csv(const fs::path& path, const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) fail_input("cannot read " + path.string());
  CsvTable t;
  t.source = path.string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      fail_input(t.source + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                 std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) fail_input(t.source + ": empty file");
  for (const auto& c : required) t.column(c);
  return t;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

// Writes to a file, or stdout when the path is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    file_.open(path);
    if (!file_) fail_input("cannot write " + path);
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

// ---------------------------------------------------------------------------

// Runs fn(i) for i in [0, n) on up to `threads` workers; results are stored by
// index so output order never depends on scheduling.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F fn) {
  threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(n, 1)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

enum class Failure { none, input, numeric };

struct ImageJob {
  Failure failure = Failure::none;
  std::string error;
};

int exit_code_for(const std::vector<ImageJob>& jobs) {
  int code = kExitOk;
  for (const auto& j : jobs) {
    if (j.failure == Failure::numeric) return kExitNumeric;
    if (j.failure == Failure::input) code = kExitInput;
  }
  return code;
}

template <class F>
void guarded(ImageJob& job, F fn) {
  try {
    fn();
  } catch (const NumericError& e) {
    job = {Failure::numeric, e.what()};
  } catch (const std::exception& e) {
    job = {Failure::input, e.what()};
  }
}

// ---------------------------------------------------------------------------
// Shared option groups

struct PwsFlags {
  std::optional<double> alpha, beta, edge_threshold, tol;
  std::optional<int> max_iters;

  void add(CLI::App* app) {
    app->add_option("--pws-alpha", alpha, "Smoothness weight of the piecewise-smooth solve (default 2)");
    app->add_option("--pws-beta", beta, "Edge-length weight (default 0.05)");
    app->add_option("--pws-edge-threshold", edge_threshold, "Fixed edge threshold; default mean + 2 std of the gradient");
    app->add_option("--pws-max-iters", max_iters, "Iteration cap (default 500)");
    app->add_option("--pws-tol", tol, "Relative solution tolerance (default 1e-6)");
  }
  FreqConfig resolve(const Layers& c) const {
    FreqConfig f;
    f.pws.reg_alpha = c.get(alpha, "pws_alpha", f.pws.reg_alpha);
    f.pws.reg_beta = c.get(beta, "pws_beta", f.pws.reg_beta);
    f.pws.max_iters = c.get(max_iters, "pws_max_iters", f.pws.max_iters);
    f.pws.tol = c.get(tol, "pws_tol", f.pws.tol);
    if (edge_threshold) f.pws.edge_threshold = *edge_threshold;
    else if (c.file.contains("pws_edge_threshold")) f.pws.edge_threshold = c.get<double>(std::nullopt, "pws_edge_threshold", 0.0);
    f.pws.validate();
    return f;
  }
};

struct ScoreFlags {
  std::optional<std::string> model;
  std::optional<int> patch_size;
  std::optional<double> p_percent, gamma, hfm_mean_min, sf_max;
  std::optional<std::string> pool;
  bool full_image_hfm = false;
  PwsFlags pws;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Trained weight container; the handcrafted baseline is used when absent");
    app->add_option("--patch-size", patch_size, "Patch size N (default: the model's, else 235)");
    app->add_option("--p", p_percent, "Worst-p% pooling fraction (default 80)");
    app->add_option("--gamma", gamma, "Mask shaping exponent (default 1.5)");
    app->add_option("--pool", pool, "per_patch or global (default per_patch)");
    app->add_flag("--full-image-hfm", full_image_hfm, "Compute the gradient map on the whole image before tiling");
    app->add_option("--baseline-hfm-min", hfm_mean_min, "Baseline: minimum mean gradient magnitude");
    app->add_option("--baseline-sf-max", sf_max, "Baseline: maximum spatial frequency (0-255 scale)");
    pws.add(app);
  }

  std::pair<PatchClassifier, ScoreConfig> resolve(const Layers& c) const {
    ScoreConfig cfg;
    PatchClassifier clf = PatchClassifier::from_baseline();
    const auto model_path = c.get(model, "model", std::string());
    int default_n = cfg.patch_size;
    if (!model_path.empty()) {
      clf = PatchClassifier::from_model(load_params(model_path));
      default_n = clf.model->arch.patch_size;
    }
    cfg.patch_size = c.get(patch_size, "patch_size", default_n);
    cfg.p_percent = c.get(p_percent, "p", cfg.p_percent);
    cfg.gamma = c.get(gamma, "gamma", cfg.gamma);
    const auto pool_name = c.get(pool, "pool", std::string("per_patch"));
    if (pool_name == "per_patch") cfg.pool = PoolMode::per_patch;
    else if (pool_name == "global") cfg.pool = PoolMode::global;
    else fail_input("unknown pool mode '" + pool_name + "'");
    cfg.full_image_hfm = full_image_hfm || c.get<bool>(std::nullopt, "full_image_hfm", false);
    cfg.baseline.hfm_mean_min = c.get(hfm_mean_min, "baseline_hfm_min", cfg.baseline.hfm_mean_min);
    cfg.baseline.sf_max = c.get(sf_max, "baseline_sf_max", cfg.baseline.sf_max);
    clf.baseline = cfg.baseline;
    cfg.freq = pws.resolve(c);
    require(cfg.p_percent > 0 && cfg.p_percent <= 100, "--p must lie in (0, 100]");
    require(cfg.gamma > 0, "--gamma must be positive");
    return {std::move(clf), cfg};
  }
};

// ---------------------------------------------------------------------------
// score

int cmd_score(const std::vector<std::string>& images, const std::string& out, const ScoreFlags& flags, const Layers& c,
              unsigned threads) {
  auto [clf, cfg] = flags.resolve(c);
  std::vector<ImageJob> jobs(images.size());
  std::vector<ScoreResult> results(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    guarded(jobs[i], [&] { results[i] = score_image(load_image(images[i]), clf, cfg); });
  });
  Output o(out);
  auto& os = o.stream();
  os << "path,Q,banded_patch_count,M\n";
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (jobs[i].failure != Failure::none) {
      std::cerr << "bandgauge: " << images[i] << ": " << jobs[i].error << '\n';
      continue;
    }
    const auto& q = results[i].quality;
    os << csv_field(images[i]) << ',' << fmt(q.q) << ',' << q.banded_patches << ',' << q.patch_count << '\n';
  }
  return exit_code_for(jobs);
}

// ---------------------------------------------------------------------------
// detect

PlaneF normalise_for_view(const PlaneF& p) {
  PlaneF out = p;
  const auto [lo, hi] = std::minmax_element(p.data.begin(), p.data.end());
  const float a = *lo, b = *hi;
  for (auto& v : out.data) v = b > a ? (v - a) / (b - a) : 0.0f;
  return out;
}

int cmd_detect(const std::string& image, const std::string& out, const std::string& raw, const std::string& dump_dir,
               const ScoreFlags& flags, const Layers& c) {
  auto [clf, cfg] = flags.resolve(c);
  const auto img = load_image(image);
  const auto res = score_image(img, clf, cfg);
  save_image(PlanarImage(render_banding_map(res.map)), out);
  if (!raw.empty()) save_float_plane(res.map.values, raw);
  if (!dump_dir.empty()) {
    fs::create_directories(dump_dir);
    const PlaneF luma = luma_plane(img);
    PlaneF hfm(luma.width, luma.height, 0.0f), lfm(luma.width, luma.height, 0.0f);
    const int n = cfg.patch_size;
    for (const auto& o : res.map.grid.patches) {
      const auto s = frequency_pair(crop(luma, o.x, o.y, n, n), cfg.freq);
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          hfm.at(o.x + x, o.y + y) = s.hfm.at(x, y);
          lfm.at(o.x + x, o.y + y) = s.lfm.at(x, y);
        }
    }
    save_float_plane(hfm, fs::path(dump_dir) / "hfm.bgf");
    save_float_plane(lfm, fs::path(dump_dir) / "lfm.bgf");
    save_image(PlanarImage(normalise_for_view(hfm)), fs::path(dump_dir) / "hfm.png");
    save_image(PlanarImage(lfm), fs::path(dump_dir) / "lfm.png");
    std::ofstream labels(fs::path(dump_dir) / "patches.csv");
    labels << "patch_x,patch_y,label,weight,sf,probability\n";
    for (std::size_t k = 0; k < res.labels.size(); ++k) {
      const auto o = res.map.grid.patches[k];
      labels << o.x << ',' << o.y << ',' << to_string(res.labels[k].value) << ',' << fmt(res.masks.w[k]) << ','
             << fmt(res.masks.stats[k].sf) << ',' << (res.probabilities.empty() ? std::string() : fmt(res.probabilities[k]))
             << '\n';
    }
  }
  std::cout << "path,Q,banded_patch_count,M\n"
            << csv_field(image) << ',' << fmt(res.quality.q) << ',' << res.quality.banded_patches << ','
            << res.quality.patch_count << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gen

void write_manifest(const fs::path& path, const std::vector<datagen::ManifestRow>& rows) {
  std::ofstream out(path);
  if (!out) fail_input("cannot write " + path.string());
  out << "image_path,patch_x,patch_y,N,label,split\n";
  for (const auto& r : rows)
    out << csv_field(r.image_path) << ',' << r.patch_x << ',' << r.patch_y << ',' << r.n << ',' << to_string(r.label) << ','
        << datagen::to_string(r.split) << '\n';
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    int v = 0;
    if (std::from_chars(item.data(), item.data() + item.size(), v).ptr != item.data() + item.size() || item.empty())
      fail_input("not an integer list: '" + s + "'");
    out.push_back(v);
  }
  return out;
}

int cmd_gen(const fs::path& out_dir, std::size_t n_images, std::size_t toy, std::uint64_t seed, int image_size,
            int patch_size, const std::string& depths, bool color, unsigned threads) {
  fs::create_directories(out_dir);
  std::vector<datagen::ManifestRow> manifest;
  if (toy > 0) {
    // Flat or striped patches, one image per patch.
    Rng rng(substream(seed, "toy"));
    std::vector<datagen::SplitName> splits(toy);
    std::vector<std::size_t> order(toy);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(substream(seed, "split"));
    split_rng.shuffle(order.begin(), order.end());
    const auto n_train = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(toy) + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(toy) + 1e-9));
    for (std::size_t r = 0; r < toy; ++r)
      splits[order[r]] = r < n_train ? datagen::SplitName::train : r < n_train + n_val ? datagen::SplitName::val : datagen::SplitName::test;
    for (std::size_t i = 0; i < toy; ++i) {
      const bool banded = i % 2 == 0;
      const PlaneF p = datagen::toy_patch(patch_size, banded, rng);
      char name[32];
      std::snprintf(name, sizeof name, "toy_%04zu.png", i);
      save_image(PlanarImage(p), out_dir / name);
      manifest.push_back({name, 0, 0, patch_size, banded ? Label::banded : Label::non_banded, splits[i]});
    }
  } else {
    datagen::DatasetOptions opt;
    opt.image_size = image_size;
    opt.patch_size = patch_size;
    if (!depths.empty()) opt.depths = parse_int_list(depths);
    for (int d : opt.depths) require(d >= 1 && d <= 8, "bit depths must lie in 1..8");
    opt.compute_features = false;
    const auto ds = datagen::make_dataset(n_images, seed, {}, opt);
    manifest = ds.manifest;
    std::vector<ImageJob> jobs(n_images);
    parallel_for(n_images, threads, [&](std::size_t i) {
      guarded(jobs[i], [&] {
        auto spec = datagen::random_spec(seed, i, opt);
        spec.color = color;
        save_image(datagen::make_sample(spec, opt.mask).image, out_dir / ds.image_names[i]);
      });
    });
    for (const auto& j : jobs)
      if (j.failure != Failure::none) fail_input(j.error);
  }
  write_manifest(out_dir / "manifest.csv", manifest);
  log("wrote " + std::to_string(manifest.size()) + " patch rows to " + (out_dir / "manifest.csv").string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct ManifestData {
  std::vector<PatchSample> train, val, test;
  int patch_size = 0;
};

Label parse_label(const CsvTable& t, std::size_t row, std::size_t col) {
  const auto& s = t.rows[row][col];
  if (s == "banded" || s == "1") return Label::banded;
  if (s == "non_banded" || s == "0") return Label::non_banded;
  t.fail(row, "label must be banded/non_banded or 1/0, got '" + s + "'");
}

ManifestData load_manifest(const fs::path& path, const FreqConfig& freq, unsigned threads) {
  const auto t = read_csv(path, {"image_path", "patch_x", "patch_y", "N", "label", "split"});
  const auto c_img = t.column("image_path"), c_x = t.column("patch_x"), c_y = t.column("patch_y"), c_n = t.column("N"),
             c_label = t.column("label"), c_split = t.column("split");
  if (t.rows.empty()) fail_input(path.string() + ": no rows");
  ManifestData md;
  struct Row {
    std::string image;
    int x, y, n;
    Label label;
    int split;
  };
  std::vector<Row> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Row row{t.rows[r][c_img], t.integer(r, c_x), t.integer(r, c_y), t.integer(r, c_n), parse_label(t, r, c_label), 0};
    const auto& sp = t.rows[r][c_split];
    if (sp == "train") row.split = 0;
    else if (sp == "val") row.split = 1;
    else if (sp == "test") row.split = 2;
    else t.fail(r, "split must be train/val/test, got '" + sp + "'");
    if (row.n < 8) t.fail(r, "N must be at least 8");
    if (row.x < 0 || row.y < 0) t.fail(r, "negative patch origin");
    if (md.patch_size == 0) md.patch_size = row.n;
    if (row.n != md.patch_size) t.fail(r, "all rows must share one patch size");
    rows.push_back(row);
  }
  // Decode each image once.
  std::map<std::string, std::size_t> index;
  std::vector<std::string> names;
  for (const auto& r : rows)
    if (index.emplace(r.image, names.size()).second) names.push_back(r.image);
  std::vector<PlaneF> lumas(names.size());
  std::vector<ImageJob> jobs(names.size());
  parallel_for(names.size(), threads, [&](std::size_t i) {
    guarded(jobs[i], [&] {
      const fs::path p = fs::path(names[i]).is_absolute() ? fs::path(names[i]) : path.parent_path() / names[i];
      lumas[i] = luma_plane(load_image(p));
    });
  });
  for (std::size_t i = 0; i < jobs.size(); ++i)
    if (jobs[i].failure != Failure::none) fail_input(jobs[i].error);
  std::vector<PatchSample> samples(rows.size());
  std::vector<ImageJob> feature_jobs(rows.size());
  parallel_for(rows.size(), threads, [&](std::size_t r) {
    guarded(feature_jobs[r], [&] {
      const auto& row = rows[r];
      const auto& luma = lumas[index.at(row.image)];
      if (row.x + row.n > luma.width || row.y + row.n > luma.height)
        fail_input(path.string() + ":" + std::to_string(t.lines[r]) + ": patch lies outside " + row.image);
      samples[r] = frequency_pair(crop(luma, row.x, row.y, row.n, row.n), freq, {row.label, 1.0});
    });
  });
  for (const auto& j : feature_jobs) {
    if (j.failure == Failure::numeric) fail_numeric(j.error);
    if (j.failure == Failure::input) fail_input(j.error);
  }
  for (std::size_t r = 0; r < rows.size(); ++r)
    (rows[r].split == 0 ? md.train : rows[r].split == 1 ? md.val : md.test).push_back(std::move(samples[r]));
  return md;
}

int cmd_train(const fs::path& manifest, const std::string& out, const std::string& report, const TrainConfig& base,
              const FreqConfig& freq, std::uint64_t seed) {
  const auto md = load_manifest(manifest, freq, base.threads);
  log("loaded " + std::to_string(md.train.size()) + "/" + std::to_string(md.val.size()) + "/" +
      std::to_string(md.test.size()) + " train/val/test patches");
  TrainConfig cfg = base;
  cfg.arch.patch_size = md.patch_size;
  cfg.seed = substream(seed, "train");
  Output rep(report);
  auto& os = rep.stream();
  os << "epoch,train_loss,val_loss,val_acc\n";
  const auto result = train(md.train, md.val, cfg, [&](const EpochReport& r) {
    os << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ',' << fmt(r.val_acc) << '\n';
    os.flush();
    log("epoch " + std::to_string(r.epoch) + " train_loss " + fmt(r.train_loss) + " val_acc " + fmt(r.val_acc));
  });
  auto params = result.params;
  params.seed = seed;
  save_params(params, out);
  log("best epoch " + std::to_string(result.best_epoch) + ", weights written to " + out);
  if (!md.test.empty()) {
    const auto st = evaluate(params, md.test);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : md.test) {
      scores.push_back(forward(params, s.hfm, s.lfm));
      labels.push_back(s.label.banded() ? 1 : 0);
    }
    std::string msg = "test accuracy " + fmt(st.accuracy);
    const bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;
    if (both) msg += ", AUROC " + fmt(eval::roc_pr(scores, labels).auroc);
    log(msg);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct Pairs {
  std::vector<std::string> ids;
  std::vector<double> predicted, mos;
};

Pairs read_pairs(const fs::path& path) {
  const auto t = read_csv(path, {"id", "predicted", "mos"});
  Pairs p;
  const auto ci = t.column("id"), cp = t.column("predicted"), cm = t.column("mos");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    p.ids.push_back(t.rows[r][ci]);
    p.predicted.push_back(t.number(r, cp));
    p.mos.push_back(t.number(r, cm));
  }
  return p;
}

std::vector<double> residuals(const Pairs& p, const eval::Logistic5Params& m) {
  std::vector<double> r;
  for (std::size_t i = 0; i < p.predicted.size(); ++i) r.push_back(m(p.predicted[i]) - p.mos[i]);
  return r;
}

void write_curve(const fs::path& path, const std::vector<eval::CurvePoint>& pts, const char* xname, const char* yname) {
  std::ofstream out(path);
  if (!out) fail_input("cannot write " + path.string());
  out << "threshold," << xname << ',' << yname << '\n';
  for (const auto& p : pts) out << fmt(p.threshold) << ',' << fmt(p.x) << ',' << fmt(p.y) << '\n';
}

int cmd_eval(const std::string& pairs_path, const std::string& pairs_b_path, const std::string& binary_path,
             const std::string& out, const std::string& curves_dir, std::uint64_t seed) {
  if (pairs_path.empty() && binary_path.empty()) fail_input("eval needs --pairs and/or --binary");
  std::vector<std::pair<std::string, double>> metrics;
  eval::LogisticFitOptions fit_opt;
  fit_opt.seed = substream(seed, "eval");
  if (!pairs_path.empty()) {
    const auto p = read_pairs(pairs_path);
    require(p.predicted.size() >= 4, pairs_path + ": need at least 4 rows");
    metrics.push_back({"n", static_cast<double>(p.predicted.size())});
    metrics.push_back({"srcc", eval::srcc(p.predicted, p.mos)});
    metrics.push_back({"krcc", eval::krcc(p.predicted, p.mos)});
    if (p.predicted.size() >= 6) {
      const auto pr = eval::plcc_rmse(p.predicted, p.mos, fit_opt);
      metrics.push_back({"plcc", pr.plcc});
      metrics.push_back({"rmse", pr.rmse});
      metrics.push_back({"logistic_b1", pr.mapping.b1});
      metrics.push_back({"logistic_b2", pr.mapping.b2});
      metrics.push_back({"logistic_b3", pr.mapping.b3});
      metrics.push_back({"logistic_b4", pr.mapping.b4});
      metrics.push_back({"logistic_b5", pr.mapping.b5});
      metrics.push_back({"logistic_converged", pr.mapping.converged ? 1.0 : 0.0});
      if (!pairs_b_path.empty()) {
        const auto pb = read_pairs(pairs_b_path);
        require(pb.predicted.size() >= 6, pairs_b_path + ": need at least 6 rows");
        const auto fb = eval::fit_logistic5(pb.predicted, pb.mos, fit_opt);
        const auto f = eval::ftest_significance(residuals(p, pr.mapping), residuals(pb, fb));
        metrics.push_back({"ftest_f", f.f});
        metrics.push_back({"ftest_critical", f.critical});
        metrics.push_back({"a_significantly_better", f.a_significantly_better ? 1.0 : 0.0});
      }
    } else {
      log("fewer than 6 pairs: skipping the logistic mapping, PLCC and RMSE");
    }
  }
  if (!binary_path.empty()) {
    const auto t = read_csv(binary_path, {"id", "score", "label"});
    const auto cs = t.column("score"), cl = t.column("label");
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      scores.push_back(t.number(r, cs));
      const int l = t.integer(r, cl);
      if (l != 0 && l != 1) t.fail(r, "label must be 0 or 1");
      labels.push_back(l);
    }
    const auto rp = eval::roc_pr(scores, labels);
    const auto th = eval::threshold_search(scores, labels);
    metrics.push_back({"auroc", rp.auroc});
    metrics.push_back({"auprc", rp.auprc});
    metrics.push_back({"threshold", th.threshold});
    metrics.push_back({"accuracy", th.accuracy});
    if (!curves_dir.empty()) {
      fs::create_directories(curves_dir);
      write_curve(fs::path(curves_dir) / "roc.csv", rp.roc, "fpr", "tpr");
      write_curve(fs::path(curves_dir) / "pr.csv", rp.pr, "recall", "precision");
    }
  }
  Output o(out);
  o.stream() << "metric,value\n";
  for (const auto& [k, v] : metrics) o.stream() << k << ',' << fmt(v) << '\n';
  if (!out.empty() && out != "-") {
    for (const auto& [k, v] : metrics) {
      char line[96];
      std::snprintf(line, sizeof line, "%-24s %14.6f\n", k.c_str(), v);
      std::cout << line;
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// mos

int cmd_mos(const fs::path& input, const std::string& out, const OutlierConfig& cfg) {
  const auto t = read_csv(input, {"image_id", "rater_id", "score"});
  const auto ci = t.column("image_id"), cs = t.column("score");
  std::vector<RatingSet> sets;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double s = t.number(r, cs);
    if (s < 0 || s > 100) t.fail(r, "score outside [0,100]");
    const auto& id = t.rows[r][ci];
    auto [it, fresh] = index.emplace(id, sets.size());
    if (fresh) sets.push_back({id, {}});
    sets[it->second].scores.push_back(s);
  }
  Output o(out);
  o.stream() << "image_id,mos,n_kept,n_removed\n";
  for (const auto& set : sets) {
    const auto rec = aggregate(set, cfg);
    o.stream() << csv_field(rec.image_id) << ',' << fmt(rec.mos) << ',' << rec.n_kept << ',' << rec.n_removed << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bandgauge: banding detection and image quality scoring"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<unsigned> threads_flag;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--config", config_path, "JSON config; flags override its keys")->check(CLI::ExistingFile);
  app.add_option("--threads", threads_flag, "Worker threads (env BANDGAUGE_THREADS as fallback)");
  app.add_option("--seed", seed_flag, "Root seed; subcommands draw named substreams from it");
  app.add_flag("-q,--quiet", g_quiet, "Suppress progress messages");

  // score
  auto* score = app.add_subcommand("score", "Score images; one CSV row per image");
  std::vector<std::string> score_images;
  std::string score_out;
  ScoreFlags score_flags;
  score->add_option("images", score_images, "Input images (PNG, PGM, PPM)")->required();
  score->add_option("-o,--out", score_out, "CSV output (default stdout)");
  score_flags.add(score);

  // detect
  auto* detect = app.add_subcommand("detect", "Write the banding map of one image");
  std::string detect_image, detect_out, detect_raw, detect_dump;
  ScoreFlags detect_flags;
  detect->add_option("image", detect_image, "Input image")->required();
  detect->add_option("-o,--out", detect_out, "Map image (.png or .pgm)")->required();
  detect->add_option("--raw", detect_raw, "Also write the unnormalised float map");
  detect->add_option("--dump-dir", detect_dump, "Write HFM/LFM planes and per-patch decisions here");
  detect_flags.add(detect);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic labelled dataset");
  std::string gen_out;
  std::optional<std::size_t> gen_n, gen_toy;
  std::optional<int> gen_size, gen_patch;
  std::optional<std::string> gen_depths;
  bool gen_color = false;
  gen->add_option("-o,--out", gen_out, "Output directory")->required();
  gen->add_option("-n,--images", gen_n, "Number of images (default 10)");
  gen->add_option("--toy", gen_toy, "Write this many separable toy patches instead of images");
  gen->add_option("--image-size", gen_size, "Image side in pixels (default 256)");
  gen->add_option("--patch-size", gen_patch, "Patch size N (default 64)");
  gen->add_option("--depths", gen_depths, "Comma-separated bit depths (default 2,3,4,5,6,7)");
  gen->add_flag("--color", gen_color, "Tinted RGB images, luma quantised in YCbCr 4:2:0");

  // train
  auto* tr = app.add_subcommand("train", "Train the dual-branch classifier from a manifest");
  std::string train_manifest, train_out, train_report;
  std::optional<double> train_lr;
  std::optional<std::size_t> train_batch;
  std::optional<int> train_epochs;
  PwsFlags train_pws;
  tr->add_option("manifest", train_manifest, "Manifest CSV (image_path,patch_x,patch_y,N,label,split)")->required();
  tr->add_option("-o,--out", train_out, "Weight container output")->required();
  tr->add_option("--report", train_report, "Training curve CSV (default stdout)");
  tr->add_option("--lr", train_lr, "Learning rate (default 1e-4)");
  tr->add_option("--batch", train_batch, "Batch size (default 32)");
  tr->add_option("--epochs", train_epochs, "Epochs (default 25)");
  train_pws.add(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Correlation and classification metrics");
  std::string eval_pairs, eval_pairs_b, eval_binary, eval_out, eval_curves;
  ev->add_option("--pairs", eval_pairs, "CSV id,predicted,mos");
  ev->add_option("--pairs-b", eval_pairs_b, "Second model's pairs for the F-test against --pairs");
  ev->add_option("--binary", eval_binary, "CSV id,score,label");
  ev->add_option("-o,--out", eval_out, "Report CSV (metric,value); default stdout");
  ev->add_option("--curves-dir", eval_curves, "Write roc.csv and pr.csv here");

  // mos
  auto* mo = app.add_subcommand("mos", "Outlier rejection and MOS aggregation");
  std::string mos_in, mos_out;
  std::optional<double> mos_alpha, mos_sd;
  std::optional<std::size_t> mos_max;
  std::optional<std::string> mos_rule;
  mo->add_option("ratings", mos_in, "CSV image_id,rater_id,score")->required();
  mo->add_option("-o,--out", mos_out, "MOS CSV (default stdout)");
  mo->add_option("--alpha", mos_alpha, "Grubbs significance level (default 0.05)");
  mo->add_option("--sd-multiplier", mos_sd, "Deviation rule multiplier (default 2.5)");
  mo->add_option("--max-removals", mos_max, "Cap on removed ratings per image");
  mo->add_option("--rule", mos_rule, "grubbs_or_sd (default), grubbs_and_sd or grubbs_only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    const Layers cfg = load_layers(config_path);
    const unsigned threads = resolve_threads(threads_flag, cfg);
    const auto seed = cfg.get<std::uint64_t>(seed_flag, "seed", 0);

    if (*score) return cmd_score(score_images, score_out, score_flags, cfg, threads);
    if (*detect) return cmd_detect(detect_image, detect_out, detect_raw, detect_dump, detect_flags, cfg);
    if (*gen)
      return cmd_gen(gen_out, cfg.get(gen_n, "images", std::size_t{10}), cfg.get(gen_toy, "toy", std::size_t{0}), seed,
                     cfg.get(gen_size, "image_size", 256), cfg.get(gen_patch, "patch_size", 64),
                     cfg.get(gen_depths, "depths", std::string()), gen_color || cfg.get<bool>(std::nullopt, "color", false),
                     threads);
    if (*tr) {
      TrainConfig tc;
      tc.learning_rate = cfg.get(train_lr, "lr", tc.learning_rate);
      tc.batch_size = cfg.get(train_batch, "batch", tc.batch_size);
      tc.epochs = cfg.get(train_epochs, "epochs", tc.epochs);
      tc.threads = threads;
      return cmd_train(train_manifest, train_out, train_report, tc, train_pws.resolve(cfg), seed);
    }
    if (*ev) return cmd_eval(eval_pairs, eval_pairs_b, eval_binary, eval_out, eval_curves, seed);
    if (*mo) {
      OutlierConfig oc;
      oc.sig_alpha = cfg.get(mos_alpha, "alpha", oc.sig_alpha);
      oc.sd_multiplier = cfg.get(mos_sd, "sd_multiplier", oc.sd_multiplier);
      oc.max_removals = cfg.get(mos_max, "max_removals", oc.max_removals);
      const auto rule = cfg.get(mos_rule, "rule", std::string("grubbs_or_sd"));
      if (rule == "grubbs_or_sd") oc.rule = OutlierRule::grubbs_or_sd;
      else if (rule == "grubbs_and_sd") oc.rule = OutlierRule::grubbs_and_sd;
      else if (rule == "grubbs_only") oc.rule = OutlierRule::grubbs_only;
      else fail_input("unknown outlier rule '" + rule + "'");
      return cmd_mos(mos_in, mos_out, oc);
    }
  } catch (const NumericError& e) {
    std::cerr << "bandgauge: numerical failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "bandgauge: error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
