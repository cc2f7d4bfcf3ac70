// aro: command-line front end. Every run writes <primary output>.manifest.json recording the
// merged configuration, seeds, input/output SHA-256 hashes, results and wall time.
//
// Seed splitting: a run has one seed S; each consumer draws derive_seed(S, stream) with
//   anchors   1 placement
//   oracle    2 coverage samples
//   train2d   3 training samples, 4 network init and shuffling
//   eval      5 reconstruction surface, 6 reference surface, 7 EMD subsample, 8 IoU samples
//   bench     9 point cloud, 10 queries

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "aro/anchors.hpp"
#include "aro/aro.hpp"
#include "aro/field.hpp"
#include "aro/io.hpp"
#include "aro/metrics.hpp"
#include "aro/nn2d.hpp"
#include "aro/parallel.hpp"
#include "aro/primitives.hpp"
#include "aro/sampling.hpp"
#include "aro/shape2d.hpp"
#include "aro/spatial.hpp"
#include "aro/visibility.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace aro;

// Bad flags or config keys; reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum Stream : std::uint64_t {
  kAnchorPlacement = 1,
  kCoverage = 2,
  kTrainSamples = 3,
  kTrainNet = 4,
  kReconSurface = 5,
  kRefSurface = 6,
  kEmdSubsample = 7,
  kIouSamples = 8,
  kBenchCloud = 9,
  kBenchQueries = 10,
};

// One registered option: its config key, how to dump the merged value, and its shape.
struct Field {
  std::string key;
  CLI::Option* opt = nullptr;
  std::function<json()> dump;
  bool is_flag = false;
  bool is_vector = false;
};

struct Command {
  CLI::App* app = nullptr;
  std::vector<Field> fields;
  std::string config_path;
  std::string manifest_path;
  unsigned threads = 0;

  template <class T>
  CLI::Option* add(const std::string& names, T& var, const std::string& desc) {
    auto* o = app->add_option(names, var, desc)->capture_default_str();
    fields.push_back({o->get_lnames().front(), o, [&var] { return json(var); }, false, false});
    return o;
  }
  template <class T>
  CLI::Option* add_list(const std::string& names, std::vector<T>& var, const std::string& desc) {
    auto* o = app->add_option(names, var, desc)->delimiter(',');
    fields.push_back({o->get_lnames().front(), o, [&var] { return json(var); }, false, true});
    return o;
  }
  CLI::Option* flag(const std::string& names, bool& var, const std::string& desc) {
    auto* o = app->add_flag(names, var, desc);
    fields.push_back({o->get_lnames().front(), o, [&var] { return json(var); }, true, false});
    return o;
  }

  const Field* find(const std::string& key) const {
    for (const auto& f : fields)
      if (f.key == key) return &f;
    return nullptr;
  }

  json merged_config() const {
    json j = json::object();
    for (const auto& f : fields) j[f.key] = f.dump();
    return j;
  }
};

struct AnchorsOpts {
  std::size_t m = 48;
  std::string strategy = "fibonacci";
  std::uint64_t seed = 0;
  std::string output = "anchors.txt";
};

struct EncodeOpts {
  std::string cloud, anchors, queries;
  int grid_res = 0;
  std::size_t k = kDefaultK;
  double half_angle = kDefaultHalfAngleDeg;
  bool normalize = false;
  std::string output = "aro.bin";
};

struct OracleOpts {
  std::string mesh, anchors;
  int res = 64;
  double box_half = 0.5;
  std::size_t coverage_samples = 0;
  std::uint64_t seed = 0;
  std::string output = "occ.grid";
  std::string mesh_out;
};

struct HeuristicOpts {
  std::string cloud, anchors;
  int res = 64;
  double box_half = 0.5;
  std::size_t k = kDefaultK;
  double half_angle = kDefaultHalfAngleDeg;
  bool normalize = false;
  std::string output = "heuristic.grid";
  std::string mesh_out;
};

// Shape and anchors shared by the 2D subcommands.
struct Shape2DOpts {
  std::string shape;
  std::string builtin;
  double disk_radius = 0.3;
  std::size_t m = 7;
  std::string anchors;
};

struct Train2DOpts {
  Shape2DOpts s;
  std::size_t samples = 20000;
  double band_sigma = 0.03;
  int epochs = 300;
  std::size_t batch = 64;
  double lr = 3e-4;
  double decay = 0.5;
  int decay_every = 100;
  int model_dim = 64, heads = 4, layers = 3, ff = 128;
  std::uint64_t seed = 1;
  int eval_res = 128;
  std::string output = "model.bin";
  std::string loss_log;
};

struct Infer2DOpts {
  Shape2DOpts s;
  std::string model;
  int res = 128;
  std::vector<std::size_t> mask;
  std::string output = "recon.pgm";
  std::string contour;
};

struct ActivationOpts {
  Shape2DOpts s;
  std::string model;
  std::size_t anchor = 0;
  int res = 128;
  std::string output = "activation.pgm";
};

struct EvalOpts {
  std::string recon, gt;
  std::size_t samples = 10000;
  std::uint64_t seed = 7;
  std::size_t emd_points = kEmdMaxPoints;
  std::size_t iou_samples = 100000;
  double box_half = 0.5;
  double iso = kIsoLevel;
  std::string output = "report.json";
};

struct BenchOpts {
  std::size_t points = 20000;
  std::size_t queries = 2000;
  std::size_t m = 48;
  std::size_t k = kDefaultK;
  double half_angle = kDefaultHalfAngleDeg;
  int res = 48;
  std::uint64_t seed = 0;
  std::string output = "bench.json";
};

class Cli {
 public:
  CLI::App app{"Anchored radial observations: anchors, encoding, occupancy, 2D network, metrics", "aro"};
  std::map<std::string, Command> commands;

  AnchorsOpts anchors;
  EncodeOpts encode;
  OracleOpts oracle;
  HeuristicOpts heuristic;
  Train2DOpts train2d;
  Infer2DOpts infer2d;
  ActivationOpts activation;
  EvalOpts eval;
  BenchOpts bench;

  Cli() {
    app.require_subcommand(1);
    app.set_version_flag("--version", "aro 1.0");

    auto& a = command("anchors", "Place an anchor set and write it as text");
    a.add("--m", anchors.m, "Number of anchors")->check(CLI::PositiveNumber);
    a.add("--strategy", anchors.strategy, "fibonacci | uniform | grid | ring2d")
        ->check(CLI::IsMember({"fibonacci", "uniform", "grid", "ring2d"}));
    a.add("--seed", anchors.seed, "Run seed");
    a.add("-o,--output", anchors.output, "Anchor file");

    auto& e = command("encode", "Extract radial observations for query points into a binary file");
    e.add("--cloud", encode.cloud, "Input point cloud (.xyz or .ply)");
    e.add("--anchors", encode.anchors, "Anchor file");
    e.add("--queries", encode.queries, "Query points (.xyz or .ply)");
    e.add("--grid-res", encode.grid_res, "Use an N^3 lattice over the unit box instead of --queries");
    e.add("--k", encode.k, "Points per cone")->check(CLI::PositiveNumber);
    e.add("--half-angle", encode.half_angle, "Cone half-angle in degrees")->check(CLI::Range(0.0, 180.0));
    e.flag("--normalize", encode.normalize, "Center the cloud and scale it into radius 0.5 (queries follow)");
    e.add("-o,--output", encode.output, "Binary observation file");

    auto& o = command("oracle", "Occupancy grid of a watertight mesh from anchor visibility");
    o.add("--mesh", oracle.mesh, "Watertight mesh (.obj)");
    o.add("--anchors", oracle.anchors, "Anchor file");
    o.add("--res", oracle.res, "Cells per axis")->check(CLI::Range(2, 1024));
    o.add("--box-half", oracle.box_half, "Half extent of the cubic domain")->check(CLI::PositiveNumber);
    o.add("--coverage-samples", oracle.coverage_samples, "Surface samples for the coverage check (0 skips it)");
    o.add("--seed", oracle.seed, "Run seed");
    o.add("-o,--output", oracle.output, "Occupancy grid file");
    o.add("--mesh-out", oracle.mesh_out, "Also write the extracted surface (.obj)");

    auto& h = command("heuristic", "Occupancy grid of a point cloud from exterior anchors");
    h.add("--cloud", heuristic.cloud, "Input point cloud (.xyz or .ply)");
    h.add("--anchors", heuristic.anchors, "Anchor file; every anchor must lie outside the shape");
    h.add("--res", heuristic.res, "Lattice points per axis")->check(CLI::Range(2, 1024));
    h.add("--box-half", heuristic.box_half, "Half extent of the cubic domain")->check(CLI::PositiveNumber);
    h.add("--k", heuristic.k, "Points per cone")->check(CLI::PositiveNumber);
    h.add("--half-angle", heuristic.half_angle, "Cone half-angle in degrees")->check(CLI::Range(0.0, 180.0));
    h.flag("--normalize", heuristic.normalize, "Center the cloud and scale it into radius 0.5");
    h.add("-o,--output", heuristic.output, "Occupancy grid file");
    h.add("--mesh-out", heuristic.mesh_out, "Also write the extracted surface (.obj)");

    auto& t = command("train2d", "Train the 2D attention network on one polygon");
    add_shape_options(t, train2d.s);
    t.add("--samples", train2d.samples, "Training samples")->check(CLI::PositiveNumber);
    t.add("--band-sigma", train2d.band_sigma, "Std-dev of the near-boundary sample band")->check(CLI::PositiveNumber);
    t.add("--epochs", train2d.epochs, "Epochs")->check(CLI::PositiveNumber);
    t.add("--batch", train2d.batch, "Batch size")->check(CLI::PositiveNumber);
    t.add("--lr", train2d.lr, "Initial Adam learning rate")->check(CLI::PositiveNumber);
    t.add("--decay", train2d.decay, "Learning-rate decay factor")->check(CLI::PositiveNumber);
    t.add("--decay-every", train2d.decay_every, "Epochs between decays")->check(CLI::PositiveNumber);
    t.add("--model-dim", train2d.model_dim, "Token width")->check(CLI::PositiveNumber);
    t.add("--heads", train2d.heads, "Attention heads")->check(CLI::PositiveNumber);
    t.add("--layers", train2d.layers, "Encoder layers")->check(CLI::PositiveNumber);
    t.add("--ff", train2d.ff, "Feed-forward hidden width")->check(CLI::PositiveNumber);
    t.add("--seed", train2d.seed, "Run seed");
    t.add("--eval-res", train2d.eval_res, "Image size for the IoU reported in the manifest (0 skips)");
    t.add("-o,--output", train2d.output, "Parameter file");
    t.add("--loss-log", train2d.loss_log, "Per-epoch loss CSV (default <output>.loss.csv)");

    auto& i = command("infer2d", "Reconstruct a 2D occupancy image with a trained network");
    add_shape_options(i, infer2d.s);
    i.add("--model", infer2d.model, "Parameter file");
    i.add("--res", infer2d.res, "Image size")->check(CLI::Range(2, 4096));
    i.add_list("--mask", infer2d.mask, "Keep only these anchor ids");
    i.add("-o,--output", infer2d.output, "Image (.pgm)");
    i.add("--contour", infer2d.contour, "Also write the iso-contour polylines");

    auto& v = command("activation", "Image produced by a single anchor's observation");
    add_shape_options(v, activation.s);
    v.add("--model", activation.model, "Parameter file");
    v.add("--anchor", activation.anchor, "Anchor id");
    v.add("--res", activation.res, "Image size")->check(CLI::Range(2, 4096));
    v.add("-o,--output", activation.output, "Image (.pgm)");

    auto& ev = command("eval", "Compare a reconstruction (.obj or .grid) with a reference mesh");
    ev.add("--recon", eval.recon, "Reconstruction (.obj mesh or .grid occupancy)");
    ev.add("--gt", eval.gt, "Reference mesh (.obj)");
    ev.add("--samples", eval.samples, "Surface samples per side")->check(CLI::PositiveNumber);
    ev.add("--seed", eval.seed, "Run seed");
    ev.add("--emd-points", eval.emd_points, "EMD subsample size")->check(CLI::PositiveNumber);
    ev.add("--iou-samples", eval.iou_samples, "Uniform samples for IoU")->check(CLI::PositiveNumber);
    ev.add("--box-half", eval.box_half, "Half extent of the IoU domain")->check(CLI::PositiveNumber);
    ev.add("--iso", eval.iso, "Iso level for occupancy grids")->check(CLI::Range(0.0, 1.0));
    ev.add("-o,--output", eval.output, "Report (.json)");

    auto& b = command("bench", "Seeded geometry benchmark; timings go to the manifest only");
    b.add("--points", bench.points, "Cloud size")->check(CLI::PositiveNumber);
    b.add("--queries", bench.queries, "Query count")->check(CLI::PositiveNumber);
    b.add("--m", bench.m, "Anchors")->check(CLI::PositiveNumber);
    b.add("--k", bench.k, "Points per cone")->check(CLI::PositiveNumber);
    b.add("--half-angle", bench.half_angle, "Cone half-angle in degrees")->check(CLI::Range(0.0, 180.0));
    b.add("--res", bench.res, "Marching-cubes lattice size")->check(CLI::Range(2, 512));
    b.add("--seed", bench.seed, "Run seed");
    b.add("-o,--output", bench.output, "Workload summary (.json)");
  }

  Cli(const Cli&) = delete;
  Cli& operator=(const Cli&) = delete;

  std::pair<std::string, Command*> selected() {
    for (auto& [name, cmd] : commands)
      if (cmd.app->parsed()) return {name, &cmd};
    throw UsageError("no subcommand");
  }

 private:
  Command& command(const std::string& name, const std::string& desc) {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, desc);
    c.app->add_option("--config", c.config_path, "key=value file or a previous run's manifest; flags override it");
    c.app->add_option("--manifest", c.manifest_path, "Manifest path (default <output>.manifest.json)");
    c.add("--threads", c.threads, "Worker cap (0 = machine parallelism)");
    return c;
  }

  static void add_shape_options(Command& c, Shape2DOpts& s) {
    c.add("--shape", s.shape, "Polygon file, one \"x y\" vertex per line");
    c.add("--builtin", s.builtin, "disk | letter")->check(CLI::IsMember({"", "disk", "letter"}));
    c.add("--disk-radius", s.disk_radius, "Radius of the builtin disk")->check(CLI::PositiveNumber);
    c.add("--m", s.m, "Ring anchors when --anchors is not given")->check(CLI::PositiveNumber);
    c.add("--anchors", s.anchors, "2D anchor file");
  }
};

// ---- config files --------------------------------------------------------------------------

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string normalize_key(std::string k) {
  std::replace(k.begin(), k.end(), '_', '-');
  return k;
}

// Values of one config entry as command-line tokens; nullopt for a false flag.
using ConfigEntries = std::vector<std::pair<std::string, json>>;

ConfigEntries read_config(const std::string& path, const std::string& subcommand) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();
  ConfigEntries out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw UsageError("config '" + path + "': " + e.what());
    }
    if (j.contains("config")) {  // manifest replay
      if (j.value("subcommand", "") != subcommand)
        throw UsageError("config '" + path + "' is a manifest for '" + j.value("subcommand", "?") + "', not '" +
                         subcommand + "'");
      j = j["config"];
    }
    if (!j.is_object()) throw UsageError("config '" + path + "': expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) out.emplace_back(normalize_key(it.key()), it.value());
    return out;
  }
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config '" + path + "' line " + std::to_string(lineno) + ": expected key=value");
    out.emplace_back(normalize_key(trim(line.substr(0, eq))), json(trim(line.substr(eq + 1))));
  }
  return out;
}

std::vector<std::string> config_tokens(const Field& f, const json& v) {
  const std::string name = "--" + f.key;
  auto scalar = [](const json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
  if (f.is_flag) {
    bool on = false;
    if (v.is_boolean())
      on = v.get<bool>();
    else if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "true" || s == "1" || s == "on" || s == "yes")
        on = true;
      else if (!(s == "false" || s == "0" || s == "off" || s == "no" || s.empty()))
        throw UsageError("config key '" + f.key + "': expected a boolean");
    } else
      throw UsageError("config key '" + f.key + "': expected a boolean");
    return on ? std::vector<std::string>{name} : std::vector<std::string>{};
  }
  std::vector<std::string> values;
  if (v.is_array()) {
    for (const auto& x : v) values.push_back(scalar(x));
  } else if (f.is_vector && v.is_string()) {
    std::istringstream ss(v.get<std::string>());
    std::string tok;
    while (ss >> tok) values.push_back(tok);
  } else {
    values.push_back(scalar(v));
  }
  if (values.empty()) return {};
  if (f.is_vector) {
    std::string joined;
    for (const auto& s : values) joined += (joined.empty() ? "" : ",") + s;
    return {name, joined};
  }
  if (values.size() != 1) throw UsageError("config key '" + f.key + "': expected one value");
  return {name, values.front()};
}

// ---- manifest ------------------------------------------------------------------------------

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256: digest initialisation failed");
  }
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (is.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

struct Run {
  json seeds = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json results = json::object();

  const std::string& input(const std::string& path) {
    inputs.push_back(path);
    return path;
  }
  const std::string& output(const std::string& path) {
    outputs.push_back(path);
    return path;
  }
};

json file_entries(const std::vector<std::string>& paths) {
  json arr = json::array();
  for (const auto& p : paths)
    arr.push_back({{"path", p}, {"sha256", sha256_file(p)}, {"bytes", std::filesystem::file_size(p)}});
  return arr;
}

void write_json(const std::string& path, const json& j) {
  auto os = io_detail::open_out(path);
  os << j.dump(2) << '\n';
  if (!os) throw Error("failed writing '" + path + "'");
}

// ---- helpers -------------------------------------------------------------------------------

void need(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

std::string sibling(const std::string& output, const std::string& suffix) { return output + suffix; }

AnchorSet load_anchors_3d(Run& run, const std::string& path) {
  auto set = load_anchors(run.input(path));
  if (set.is_2d()) throw Error("anchors '" + path + "' are 2D; this command needs 3D anchors");
  return set;
}

std::vector<Vec3> lattice_points(int res, double half) {
  std::vector<Vec3> q;
  const double h = 2 * half / (res - 1);
  for (int k = 0; k < res; ++k)
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i) q.push_back({-half + i * h, -half + j * h, -half + k * h});
  return q;
}

struct Loaded2D {
  Shape2D shape;
  std::vector<Vec2> anchors;
};

Loaded2D load_2d(Run& run, const Shape2DOpts& s) {
  if (s.shape.empty() == s.builtin.empty()) throw UsageError("give exactly one of --shape and --builtin");
  Shape2D shape = !s.shape.empty()       ? load_shape(run.input(s.shape))
                  : s.builtin == "disk" ? make_disk_shape(s.disk_radius)
                                        : make_letter_g_shape();
  std::vector<Vec2> anchors;
  if (!s.anchors.empty()) {
    const auto set = load_anchors(run.input(s.anchors));
    anchors = set.positions_2d();
  } else {
    anchors = ring_anchors_2d(s.m).positions_2d();
  }
  return {std::move(shape), std::move(anchors)};
}

void save_contours(const std::string& path, const std::vector<Polyline>& loops) {
  auto os = io_detail::open_out(path);
  os << std::setprecision(17);
  for (const auto& l : loops) {
    os << (l.closed ? "closed " : "open ") << l.points.size() << '\n';
    for (const auto& p : l.points) os << p.x << ' ' << p.y << '\n';
  }
}

TriMesh watertight_copy(const TriMesh& m) { return TriMesh(m.vertices, m.triangles, true); }

Aabb scene_box(const TriMesh& mesh, double half) {
  Aabb box = Aabb::cube(half);
  const Aabb b = mesh.bounds();
  box.expand(b.min - Vec3{1e-3, 1e-3, 1e-3});
  box.expand(b.max + Vec3{1e-3, 1e-3, 1e-3});
  return box;
}

// ---- subcommands -----------------------------------------------------------------------------

std::string run_anchors(const AnchorsOpts& o, Run& run) {
  const auto strategy = parse_strategy(o.strategy);
  const std::uint64_t placement = derive_seed(o.seed, kAnchorPlacement);
  AnchorSet set;
  switch (strategy) {
    case AnchorStrategy::LayeredFibonacci: set = layered_fibonacci(o.m); break;
    case AnchorStrategy::UniformBall: set = uniform_ball(o.m, placement); break;
    case AnchorStrategy::GridSample: set = grid_sample(o.m, placement); break;
    case AnchorStrategy::Ring2D: set = ring_anchors_2d(o.m); break;
    default: throw UsageError("unsupported strategy '" + o.strategy + "'");
  }
  run.seeds = {{"run", o.seed}, {"placement", placement}};
  save_anchors(run.output(o.output), set);
  run.results = {{"anchors", set.size()}, {"strategy", to_string(set.strategy)}};
  return o.output;
}

std::string run_encode(const EncodeOpts& o, Run& run) {
  need(o.cloud, "--cloud");
  need(o.anchors, "--anchors");
  if (o.queries.empty() == (o.grid_res == 0)) throw UsageError("give exactly one of --queries and --grid-res");
  if (o.grid_res == 1 || o.grid_res < 0) throw UsageError("--grid-res must be >= 2");
  PointCloud cloud = load_cloud(run.input(o.cloud));
  const auto anchors = load_anchors_3d(run, o.anchors);
  std::vector<Vec3> queries = o.queries.empty() ? lattice_points(o.grid_res, 0.5) : load_cloud(run.input(o.queries)).points;
  if (o.normalize) {
    cloud = normalize_to_unit_sphere(cloud);
    for (auto& q : queries) q = cloud.normalization->apply(q);
  }
  const SpatialIndex index(cloud);
  auto os = io_detail::open_out(run.output(o.output), true);
  encode_queries(os, index, anchors, queries, degrees_to_radians(o.half_angle), o.k);
  if (!os.flush()) throw Error("failed writing '" + o.output + "'");
  run.results = {{"anchors", anchors.size()}, {"k", o.k}, {"queries", queries.size()}, {"cloud_points", cloud.size()}};
  return o.output;
}

std::string run_oracle(const OracleOpts& o, Run& run) {
  need(o.mesh, "--mesh");
  need(o.anchors, "--anchors");
  const MeshScene scene(load_obj(run.input(o.mesh), true), Aabb::cube(o.box_half));
  const auto anchors = classify_anchors(scene, load_anchors_3d(run, o.anchors));
  run.seeds = {{"run", o.seed}};
  if (o.coverage_samples > 0) {
    const std::uint64_t s = derive_seed(o.seed, kCoverage);
    run.seeds["coverage"] = s;
    const double cov = coverage_check(scene, anchors.positions, o.coverage_samples, s);
    run.results["coverage"] = cov;
    if (cov < 1.0) std::cerr << "aro: warning: anchors cover " << cov << " of the surface; labels may fail\n";
  }
  const auto labels = oracle_occupancy_mixed(scene, anchors, {o.res, o.res, o.res});
  OccupancyGrid grid(labels.res, labels.cell_center(0, 0, 0), labels.cell_size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid.values[i] = labels.labels[i] == CellLabel::Inside ? 1.0 : 0.0;
  save_grid(run.output(o.output), grid);
  std::size_t flooded = 0;
  for (auto s : labels.sources) flooded += s == LabelSource::ResolvedByFlood;
  run.results["interior_anchors"] = anchors.count(AnchorLabel::Interior);
  run.results["exterior_anchors"] = anchors.count(AnchorLabel::Exterior);
  run.results["inside_cells"] = labels.count(CellLabel::Inside);
  run.results["flood_resolved_cells"] = flooded;
  if (!o.mesh_out.empty()) {
    const auto mesh = marching_cubes(grid);
    save_obj(run.output(o.mesh_out), mesh);
    run.results["mesh_triangles"] = mesh.size();
  }
  return o.output;
}

std::string run_heuristic(const HeuristicOpts& o, Run& run) {
  need(o.cloud, "--cloud");
  need(o.anchors, "--anchors");
  PointCloud cloud = load_cloud(run.input(o.cloud));
  if (o.normalize) cloud = normalize_to_unit_sphere(cloud);
  const auto anchors = load_anchors_3d(run, o.anchors);
  const SpatialIndex index(cloud);
  const double half_angle = degrees_to_radians(o.half_angle);
  std::atomic<std::size_t> abstained{0};
  // Points no anchor can judge are counted and left empty.
  const auto grid = evaluate_grid(
      [&](Vec3 x) {
        const auto aro = extract_aro(index, anchors, x, half_angle, o.k);
        for (const auto& obs : aro.observations)
          if (estimate_radial_depth(obs)) return occupancy_from_depths(aro) ? 1.0 : 0.0;
        ++abstained;
        return 0.0;
      },
      Aabb::cube(o.box_half), {o.res, o.res, o.res});
  save_grid(run.output(o.output), grid);
  std::size_t inside = 0;
  for (double v : grid.values) inside += v > kIsoLevel;
  run.results = {{"inside_points", inside}, {"abstained_points", abstained.load()}, {"cloud_points", cloud.size()}};
  if (!o.mesh_out.empty()) {
    const auto mesh = marching_cubes(grid);
    save_obj(run.output(o.mesh_out), mesh);
    run.results["mesh_triangles"] = mesh.size();
  }
  return o.output;
}

std::string run_train2d(const Train2DOpts& o, Run& run) {
  const auto in = load_2d(run, o.s);
  const std::uint64_t sample_seed = derive_seed(o.seed, kTrainSamples);
  const std::uint64_t net_seed = derive_seed(o.seed, kTrainNet);
  run.seeds = {{"run", o.seed}, {"samples", sample_seed}, {"network", net_seed}};
  const auto samples = generate_samples_2d(in.shape, o.samples, sample_seed, o.band_sigma);
  const auto data = make_examples(in.shape, in.anchors, samples);

  NetConfig net;
  net.model_dim = o.model_dim;
  net.heads = o.heads;
  net.layers = o.layers;
  net.ff_hidden = o.ff;
  net.validate();
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.decay_factor = o.decay;
  cfg.decay_every = o.decay_every;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.seed = net_seed;

  const std::string log_path = o.loss_log.empty() ? sibling(o.output, ".loss.csv") : o.loss_log;
  auto log = io_detail::open_out(log_path);
  log << "epoch,loss,learning_rate\n" << std::setprecision(17);
  const auto result = train(data, net, cfg, [&](int epoch, double loss, double lr) {
    log << epoch << ',' << loss << ',' << lr << '\n';
    std::cerr << "epoch " << epoch << " loss " << loss << " lr " << lr << '\n';
  });
  log.close();
  if (!log) throw Error("failed writing '" + log_path + "'");
  save_params(run.output(o.output), result.params);
  run.output(log_path);
  run.results["final_loss"] = result.epoch_loss.back();
  run.results["parameters"] = result.params.size();
  run.results["anchors"] = in.anchors.size();
  if (o.eval_res > 0) {
    const auto img = reconstruct_image(result.params, in.shape, in.anchors, o.eval_res);
    run.results["iou"] = grid_iou(img, rasterize_shape(in.shape, o.eval_res));
    run.results["iou_res"] = o.eval_res;
  }
  return o.output;
}

std::string run_infer2d(const Infer2DOpts& o, Run& run) {
  need(o.model, "--model");
  const auto in = load_2d(run, o.s);
  const auto params = load_params(run.input(o.model));
  std::optional<std::vector<std::size_t>> mask;
  if (!o.mask.empty()) mask = o.mask;
  const auto img = reconstruct_image(params, in.shape, in.anchors, o.res, mask);
  save_pgm(run.output(o.output), img);
  const auto loops = marching_squares(img);
  run.results = {{"iou", grid_iou(img, rasterize_shape(in.shape, o.res))}, {"contours", loops.size()}};
  if (!o.contour.empty()) save_contours(run.output(o.contour), loops);
  return o.output;
}

std::string run_activation(const ActivationOpts& o, Run& run) {
  need(o.model, "--model");
  const auto in = load_2d(run, o.s);
  const auto params = load_params(run.input(o.model));
  const auto img = anchor_activation_map(params, in.shape, in.anchors, o.anchor, o.res);
  save_pgm(run.output(o.output), img);
  // Share of the thresholded activation lying in the anchor's visible region.
  const Vec2 a = in.anchors[o.anchor];
  std::size_t active = 0, active_visible = 0, visible = 0;
  for (int j = 0; j < o.res; ++j) {
    for (int i = 0; i < o.res; ++i) {
      const Vec2 p = img.point(i, j);
      const bool vis = distance(p, a) > 0 && distance(p, a) < hit_distance_2d(in.shape, a, p);
      const bool on = img.at(i, j) > kIsoLevel;
      visible += vis;
      active += on;
      active_visible += on && vis;
    }
  }
  run.results = {{"active_pixels", active}, {"active_in_visible", active_visible},
                 {"active_in_hidden", active - active_visible}, {"visible_pixels", visible}};
  return o.output;
}

std::string run_eval(const EvalOpts& o, const json& config, Run& run) {
  need(o.recon, "--recon");
  need(o.gt, "--gt");
  const std::uint64_t s_recon = derive_seed(o.seed, kReconSurface), s_ref = derive_seed(o.seed, kRefSurface);
  const std::uint64_t s_emd = derive_seed(o.seed, kEmdSubsample), s_iou = derive_seed(o.seed, kIouSamples);
  run.seeds = {{"run", o.seed}, {"recon_surface", s_recon}, {"reference_surface", s_ref}, {"emd", s_emd}, {"iou", s_iou}};

  const TriMesh gt = load_obj(run.input(o.gt), true);
  const MeshScene gt_scene(gt, scene_box(gt, o.box_half));
  const Aabb domain = Aabb::cube(o.box_half);

  TriMesh recon_mesh;
  std::function<bool(Vec3)> recon_inside;
  std::unique_ptr<MeshScene> recon_scene;
  std::optional<OccupancyGrid> grid;
  std::string iou_note;
  run.input(o.recon);
  if (std::filesystem::path(o.recon).extension() == ".grid") {
    grid = load_grid(o.recon);
    recon_mesh = marching_cubes(*grid, o.iso);
    const OccupancyGrid& g = *grid;
    // Nearest lattice value; outside the lattice counts as empty.
    recon_inside = [&g, iso = o.iso](Vec3 p) {
      int c[3];
      for (int a = 0; a < 3; ++a) {
        const double u = (p[a] - g.origin[a]) / g.spacing[a];
        c[a] = static_cast<int>(std::lround(u));
        if (c[a] < 0 || c[a] >= g.res[a]) return false;
      }
      return g.at(c[0], c[1], c[2]) > iso;
    };
  } else {
    recon_mesh = load_obj(o.recon, false);
    if (recon_mesh.is_edge_manifold_closed()) {
      recon_scene = std::make_unique<MeshScene>(watertight_copy(recon_mesh), scene_box(recon_mesh, o.box_half));
      recon_inside = [&](Vec3 p) { return recon_scene->box().contains(p) && parity_inside(*recon_scene, p); };
    } else {
      iou_note = "reconstruction is not closed; IoU undefined";
    }
  }
  if (recon_mesh.empty()) throw Error("reconstruction has no surface");

  const auto a = sample_mesh_surface(recon_mesh, o.samples, s_recon);
  const auto b = sample_mesh_surface(gt, o.samples, s_ref);
  MetricReport r;
  r.cd = chamfer(a, b);
  r.hd = hausdorff(a, b);
  r.emd = emd(a, b, s_emd, o.emd_points);
  r.surface_samples = o.samples;
  r.emd_samples = std::min(o.emd_points, o.samples);
  r.seed = o.seed;
  json report;
  report["cd"] = r.cd;
  report["hd"] = r.hd;
  report["emd"] = r.emd;
  if (recon_inside) {
    r.iou = occupancy_iou(recon_inside, [&](Vec3 p) { return parity_inside(gt_scene, p); }, domain, o.iou_samples, s_iou);
    r.iou_samples = o.iou_samples;
    report["iou"] = r.iou;
  } else {
    report["iou"] = nullptr;
    report["iou_note"] = iou_note;
  }
  report["surface_samples"] = r.surface_samples;
  report["emd_samples"] = r.emd_samples;
  report["iou_samples"] = r.iou_samples;
  report["seed"] = r.seed;
  report["conventions"] = {{"cd", "symmetric mean of unsquared nearest-neighbour distances"},
                           {"hd", "maximum of both directed Hausdorff distances"},
                           {"emd", "mean matched distance, exact assignment on equal-size subsamples"},
                           {"iou", "uniform samples of the domain cube"}};
  report["config"] = config;
  write_json(run.output(o.output), report);
  run.results = {{"cd", r.cd}, {"hd", r.hd}, {"emd", r.emd}, {"iou", report["iou"]}};
  return o.output;
}

std::string run_bench(const BenchOpts& o, Run& run) {
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); };
  const std::uint64_t s_cloud = derive_seed(o.seed, kBenchCloud), s_q = derive_seed(o.seed, kBenchQueries);
  run.seeds = {{"run", o.seed}, {"cloud", s_cloud}, {"queries", s_q}};

  PointCloud cloud;
  Rng rc(s_cloud);
  for (std::size_t i = 0; i < o.points; ++i) cloud.points.push_back(rc.unit_vector() * 0.4);
  std::vector<Vec3> queries;
  Rng rq(s_q);
  for (std::size_t i = 0; i < o.queries; ++i) queries.push_back(rq.in_box(Aabb::cube(0.5)));
  const auto anchors = layered_fibonacci(o.m);
  json timings;

  auto t0 = clock::now();
  const SpatialIndex index(cloud);
  timings["index_build"] = seconds(t0);

  t0 = clock::now();
  std::ostringstream encoded;
  encode_queries(encoded, index, anchors, queries, degrees_to_radians(o.half_angle), o.k);
  timings["encode"] = seconds(t0);

  t0 = clock::now();
  const auto grid = evaluate_grid([](Vec3 p) { return std::clamp(0.5 + 8.0 * (0.4 - length(p)), 0.0, 1.0); },
                                  Aabb::cube(0.5), {o.res, o.res, o.res});
  const auto mesh = marching_cubes(grid);
  timings["grid_and_marching_cubes"] = seconds(t0);

  t0 = clock::now();
  const auto surf = sample_mesh_surface(mesh, 4096, s_cloud);
  PointCloud sub;
  sub.points.assign(cloud.points.begin(), cloud.points.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(4096, cloud.size())));
  const double cd = chamfer(surf, sub);
  timings["chamfer"] = seconds(t0);

  // Checksum of the encoded bytes, so the artifact changes whenever any observation does.
  const std::string bytes = encoded.str();
  std::uint64_t fnv = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) fnv = (fnv ^ c) * 0x100000001b3ull;
  std::ostringstream fnv_hex;
  fnv_hex << std::hex << std::setw(16) << std::setfill('0') << fnv;

  const json summary = {{"points", o.points},      {"queries", o.queries},           {"anchors", anchors.size()},
                        {"k", o.k},                {"half_angle_deg", o.half_angle}, {"encoded_bytes", bytes.size()},
                        {"encoded_fnv1a64", fnv_hex.str()}, {"mesh_triangles", mesh.size()},
                        {"chamfer_ball_vs_cloud", cd}};
  write_json(run.output(o.output), summary);
  run.results = {{"timings_seconds", timings}, {"threads", max_threads()}};
  return o.output;
}

// ---- driver ----------------------------------------------------------------------------------

std::vector<std::string> reversed(std::vector<std::string> v) {
  std::reverse(v.begin(), v.end());
  return v;
}

int execute(Cli& cli, const std::string& name, Command& cmd) {
  const auto t0 = std::chrono::steady_clock::now();
  set_max_threads(cmd.threads);
  const json config = cmd.merged_config();
  Run run;
  std::string primary;
  if (name == "anchors") primary = run_anchors(cli.anchors, run);
  else if (name == "encode") primary = run_encode(cli.encode, run);
  else if (name == "oracle") primary = run_oracle(cli.oracle, run);
  else if (name == "heuristic") primary = run_heuristic(cli.heuristic, run);
  else if (name == "train2d") primary = run_train2d(cli.train2d, run);
  else if (name == "infer2d") primary = run_infer2d(cli.infer2d, run);
  else if (name == "activation") primary = run_activation(cli.activation, run);
  else if (name == "eval") primary = run_eval(cli.eval, config, run);
  else primary = run_bench(cli.bench, run);

  json manifest;
  manifest["tool"] = "aro";
  manifest["manifest_version"] = 1;
  manifest["subcommand"] = name;
  manifest["config"] = config;
  manifest["seeds"] = run.seeds;
  manifest["inputs"] = file_entries(run.inputs);
  manifest["outputs"] = file_entries(run.outputs);
  manifest["results"] = run.results;
  manifest["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string path = cmd.manifest_path.empty() ? sibling(primary, ".manifest.json") : cmd.manifest_path;
  write_json(path, manifest);
  std::cout << "wrote " << primary << " (manifest " << path << ")\n";
  return 0;
}

int usage_error(const std::string& msg) {
  std::cerr << "aro: " << msg << "\nRun with --help for more information.\n";
  return 2;
}

int main_impl(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  auto first = std::make_unique<Cli>();
  try {
    first->app.parse(reversed(args));
  } catch (const CLI::ParseError& e) {
    const int code = first->app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    auto [name, cmd] = first->selected();
    if (cmd->config_path.empty()) return execute(*first, name, *cmd);

    // Config values fill only the options the command line left unset.
    std::vector<std::string> merged = args;
    for (const auto& [key, value] : read_config(cmd->config_path, name)) {
      const Field* f = cmd->find(key);
      if (!f) throw UsageError("config '" + cmd->config_path + "': unknown key '" + key + "' for " + name);
      if (f->opt->count() > 0) continue;
      for (auto& tok : config_tokens(*f, value)) merged.push_back(std::move(tok));
    }
    auto second = std::make_unique<Cli>();
    try {
      second->app.parse(reversed(merged));
    } catch (const CLI::ParseError& e) {
      const int code = second->app.exit(e);
      return code == 0 ? 0 : 2;
    }
    auto [name2, cmd2] = second->selected();
    return execute(*second, name2, *cmd2);
  } catch (const UsageError& e) {
    return usage_error(e.what());
  } catch (const std::exception& e) {
    std::cerr << "aro: error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) { return main_impl(argc, argv); }
