#include "model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace tsppc {

std::vector<Kind> ModelConfig::kinds() const {
  std::vector<Kind> ks = {Kind::NN};
  if (use_ps) ks.push_back(Kind::PS);
  if (use_sp) ks.push_back(Kind::SP);
  if (use_mm) ks.push_back(Kind::MM);
  return ks;
}

std::string ModelConfig::kinds_string() const {
  std::string out;
  for (Kind u : kinds()) {
    if (!out.empty()) out += ',';
    out += kind_str(u);
  }
  return out;
}

void ModelConfig::set_kinds(const std::string& csv) {
  use_ps = use_sp = use_mm = false;
  bool saw_nn = false;
  for (const auto& tok : split(csv, ',')) {
    if (tok == "nn")
      saw_nn = true;
    else if (tok == "ps")
      use_ps = true;
    else if (tok == "sp")
      use_sp = true;
    else if (tok == "mm")
      use_mm = true;
    else
      throw Error(ErrorCode::Argument, "unknown attention kind '" + tok + "'");
  }
  if (!saw_nn) throw Error(ErrorCode::Argument, "the kind set must include nn");
}

void ModelConfig::check() const {
  if (d_h < 1 || heads < 1 || n_layers < 0 || ff_dim < 1)
    throw Error(ErrorCode::Argument, "model dimensions must be positive");
  if (d_h % heads != 0)
    throw Error(ErrorCode::Argument, "embedding dimension must be divisible by the head count");
  if (!(clip > 0.0)) throw Error(ErrorCode::Argument, "clip constant must be > 0");
}

namespace {

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
}

void fill_uniform_vec(Eigen::VectorXd& v, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
}

}  // namespace

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.check();
  Rng rng(seed);
  const int d_h = cfg.d_h;

  Model m;
  m.cfg = cfg;
  m.embed_W.resize(d_h, 2);
  fill_uniform(m.embed_W, rng);
  m.embed_b.resize(d_h);
  fill_uniform_vec(m.embed_b, 2, rng);

  m.layers.resize(cfg.n_layers);
  for (auto& layer : m.layers) {
    for (Kind u : cfg.kinds()) {
      auto& kw = layer.attn[static_cast<int>(u)];
      kw.Wq.resize(d_h, d_h);
      kw.Wk.resize(d_h, d_h);
      kw.Wv.resize(d_h, d_h);
      fill_uniform(kw.Wq, rng);
      fill_uniform(kw.Wk, rng);
      fill_uniform(kw.Wv, rng);
    }
    layer.Wo.resize(d_h, d_h);
    fill_uniform(layer.Wo, rng);
    layer.ff_W1.resize(cfg.ff_dim, d_h);
    fill_uniform(layer.ff_W1, rng);
    layer.ff_b1.resize(cfg.ff_dim);
    fill_uniform_vec(layer.ff_b1, d_h, rng);
    layer.ff_W2.resize(d_h, cfg.ff_dim);
    fill_uniform(layer.ff_W2, rng);
    layer.ff_b2.resize(d_h);
    fill_uniform_vec(layer.ff_b2, cfg.ff_dim, rng);
    for (BnLayer* bn : {&layer.bn1, &layer.bn2}) {
      bn->gamma = Eigen::VectorXd::Ones(d_h);
      bn->beta = Eigen::VectorXd::Zero(d_h);
      bn->run_mean = Eigen::VectorXd::Zero(d_h);
      bn->run_var = Eigen::VectorXd::Ones(d_h);
    }
  }

  m.dec.glimpse.Wq.resize(d_h, 2 * d_h);
  m.dec.glimpse.Wk.resize(d_h, d_h);
  m.dec.glimpse.Wv.resize(d_h, d_h);
  fill_uniform(m.dec.glimpse.Wq, rng);
  fill_uniform(m.dec.glimpse.Wk, rng);
  fill_uniform(m.dec.glimpse.Wv, rng);
  m.dec.glimpse_Wo.resize(d_h, d_h);
  fill_uniform(m.dec.glimpse_Wo, rng);
  m.dec.Wq.resize(d_h, d_h);
  fill_uniform(m.dec.Wq, rng);
  m.dec.Wk.resize(d_h, d_h);
  fill_uniform(m.dec.Wk, rng);
  return m;
}

Model Model::like_zero() const {
  Model z = *this;
  for (auto& v : param_views(z)) std::memset(v.data, 0, v.size * sizeof(double));
  for (auto& v : state_views(z)) std::memset(v.data, 0, v.size * sizeof(double));
  return z;
}

namespace {

template <class M>
void add_view(std::vector<ParamView>& out, const std::string& name, M& mat) {
  out.push_back({name, mat.data(), mat.size()});
}

}  // namespace

std::vector<ParamView> param_views(Model& m) {
  std::vector<ParamView> out;
  add_view(out, "embed.W", m.embed_W);
  add_view(out, "embed.b", m.embed_b);
  for (int l = 0; l < m.cfg.n_layers; ++l) {
    auto& layer = m.layers[l];
    std::string pre = "enc" + std::to_string(l) + ".";
    for (Kind u : m.cfg.kinds()) {
      auto& kw = layer.attn[static_cast<int>(u)];
      std::string kp = pre + kind_str(u) + ".";
      add_view(out, kp + "Wq", kw.Wq);
      add_view(out, kp + "Wk", kw.Wk);
      add_view(out, kp + "Wv", kw.Wv);
    }
    add_view(out, pre + "Wo", layer.Wo);
    add_view(out, pre + "ff.W1", layer.ff_W1);
    add_view(out, pre + "ff.b1", layer.ff_b1);
    add_view(out, pre + "ff.W2", layer.ff_W2);
    add_view(out, pre + "ff.b2", layer.ff_b2);
    add_view(out, pre + "bn1.gamma", layer.bn1.gamma);
    add_view(out, pre + "bn1.beta", layer.bn1.beta);
    add_view(out, pre + "bn2.gamma", layer.bn2.gamma);
    add_view(out, pre + "bn2.beta", layer.bn2.beta);
  }
  add_view(out, "dec.glimpse.Wq", m.dec.glimpse.Wq);
  add_view(out, "dec.glimpse.Wk", m.dec.glimpse.Wk);
  add_view(out, "dec.glimpse.Wv", m.dec.glimpse.Wv);
  add_view(out, "dec.glimpse.Wo", m.dec.glimpse_Wo);
  add_view(out, "dec.Wq", m.dec.Wq);
  add_view(out, "dec.Wk", m.dec.Wk);
  return out;
}

std::vector<ParamView> state_views(Model& m) {
  std::vector<ParamView> out;
  for (int l = 0; l < m.cfg.n_layers; ++l) {
    auto& layer = m.layers[l];
    std::string pre = "enc" + std::to_string(l) + ".";
    add_view(out, pre + "bn1.run_mean", layer.bn1.run_mean);
    add_view(out, pre + "bn1.run_var", layer.bn1.run_var);
    add_view(out, pre + "bn2.run_mean", layer.bn2.run_mean);
    add_view(out, pre + "bn2.run_var", layer.bn2.run_var);
  }
  return out;
}

std::ptrdiff_t param_count(const Model& m) {
  std::ptrdiff_t total = 0;
  for (auto& v : param_views(const_cast<Model&>(m))) total += v.size;
  return total;
}

double param_sq_norm(const Model& m) {
  double total = 0.0;
  for (auto& v : param_views(const_cast<Model&>(m)))
    for (std::ptrdiff_t i = 0; i < v.size; ++i) total += v.data[i] * v.data[i];
  return total;
}

// ---- checkpoint io ----
//
// Layout: a text header describing the architecture and every section
// (canonical name + element count), a literal "data" line, then the raw
// little-endian doubles of all sections concatenated in header order.
// Attention weights are stored one section per head, row-major, so the file
// layout is independent of the in-memory head stacking.

namespace {

constexpr const char* kCheckpointMagic = "tsppc-checkpoint v1";

struct Section {
  std::string name;
  // Either a row-major view into a stacked matrix (rows [row0, row0+rows) x
  // cols [col0, col0+cols) of *mat) or a whole vector.
  Eigen::MatrixXd* mat = nullptr;
  Eigen::VectorXd* vector = nullptr;
  int row0 = 0, col0 = 0, rows = 0, cols = 1;
  std::ptrdiff_t count() const { return static_cast<std::ptrdiff_t>(rows) * cols; }
};

class SectionList {
public:
  explicit SectionList(Model& m) : cfg_(m.cfg) {
    const int d_h = cfg_.d_h;
    const int d_k = cfg_.d_k();
    whole("embed.W", m.embed_W);
    vec("embed.b", m.embed_b);
    for (int l = 0; l < cfg_.n_layers; ++l) {
      auto& layer = m.layers[l];
      std::string pre = "enc" + std::to_string(l) + ".";
      for (Kind u : cfg_.kinds()) {
        auto& kw = layer.attn[static_cast<int>(u)];
        std::string kp = pre + std::string(kind_str(u)) + ".h";
        for (int b = 0; b < cfg_.heads; ++b) {
          std::string hp = kp + std::to_string(b) + ".";
          block(hp + "Wq", kw.Wq, b * d_k, 0, d_k, static_cast<int>(kw.Wq.cols()));
          block(hp + "Wk", kw.Wk, b * d_k, 0, d_k, d_h);
          block(hp + "Wv", kw.Wv, b * d_k, 0, d_k, d_h);
        }
      }
      for (int b = 0; b < cfg_.heads; ++b)
        block(pre + "h" + std::to_string(b) + ".Wo", layer.Wo, 0, b * d_k, d_h, d_k);
      whole(pre + "ff.W1", layer.ff_W1);
      vec(pre + "ff.b1", layer.ff_b1);
      whole(pre + "ff.W2", layer.ff_W2);
      vec(pre + "ff.b2", layer.ff_b2);
      for (auto [bn, tag] : {std::pair{&layer.bn1, "bn1."}, std::pair{&layer.bn2, "bn2."}}) {
        vec(pre + tag + "gamma", bn->gamma);
        vec(pre + tag + "beta", bn->beta);
        vec(pre + tag + "run_mean", bn->run_mean);
        vec(pre + tag + "run_var", bn->run_var);
      }
    }
    for (int b = 0; b < cfg_.heads; ++b) {
      std::string hp = "dec.glimpse.h" + std::to_string(b) + ".";
      block(hp + "Wq", m.dec.glimpse.Wq, b * d_k, 0, d_k, 2 * d_h);
      block(hp + "Wk", m.dec.glimpse.Wk, b * d_k, 0, d_k, d_h);
      block(hp + "Wv", m.dec.glimpse.Wv, b * d_k, 0, d_k, d_h);
      block(hp + "Wo", m.dec.glimpse_Wo, 0, b * d_k, d_h, d_k);
    }
    whole("dec.Wq", m.dec.Wq);
    whole("dec.Wk", m.dec.Wk);
  }

  const std::vector<Section>& sections() const { return sections_; }

private:
  void whole(const std::string& name, Eigen::MatrixXd& m) {
    block(name, m, 0, 0, static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  }
  void vec(const std::string& name, Eigen::VectorXd& v) {
    Section s;
    s.name = name;
    s.vector = &v;
    s.rows = static_cast<int>(v.size());
    sections_.push_back(std::move(s));
  }
  void block(const std::string& name, Eigen::MatrixXd& m, int r0, int c0, int rows, int cols) {
    Section s;
    s.name = name;
    s.mat = &m;
    s.row0 = r0;
    s.col0 = c0;
    s.rows = rows;
    s.cols = cols;
    sections_.push_back(std::move(s));
  }

  ModelConfig cfg_;
  std::vector<Section> sections_;
};

void copy_out(const Section& s, std::vector<double>& buf) {
  buf.resize(s.count());
  if (s.vector) {
    std::memcpy(buf.data(), s.vector->data(), s.rows * sizeof(double));
    return;
  }
  std::size_t k = 0;
  for (int r = 0; r < s.rows; ++r)
    for (int c = 0; c < s.cols; ++c) buf[k++] = (*s.mat)(s.row0 + r, s.col0 + c);
}

void copy_in(const Section& s, const std::vector<double>& buf) {
  if (s.vector) {
    std::memcpy(s.vector->data(), buf.data(), s.rows * sizeof(double));
    return;
  }
  std::size_t k = 0;
  for (int r = 0; r < s.rows; ++r)
    for (int c = 0; c < s.cols; ++c) (*s.mat)(s.row0 + r, s.col0 + c) = buf[k++];
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  Model& mm = const_cast<Model&>(m);
  SectionList list(mm);
  os << kCheckpointMagic << '\n';
  os << "d_h " << m.cfg.d_h << '\n';
  os << "heads " << m.cfg.heads << '\n';
  os << "layers " << m.cfg.n_layers << '\n';
  os << "ff_dim " << m.cfg.ff_dim << '\n';
  os << "clip " << format_double(m.cfg.clip) << '\n';
  os << "kinds " << m.cfg.kinds_string() << '\n';
  os << "sparsify " << m.sparsify_hint << '\n';
  os << "sections " << list.sections().size() << '\n';
  for (const auto& s : list.sections()) os << s.name << ' ' << s.count() << '\n';
  os << "data\n";
  std::vector<double> buf;
  for (const auto& s : list.sections()) {
    copy_out(s, buf);
    os.write(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(double));
  }
  if (!os) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open '" + path + "'");

  auto next_line = [&is, &path]() {
    std::string line;
    if (!std::getline(is, line)) throw Error(ErrorCode::Format, "truncated checkpoint '" + path + "'");
    return line;
  };
  auto field = [&next_line](const std::string& key) {
    std::string line = next_line();
    if (line.rfind(key + " ", 0) != 0)
      throw Error(ErrorCode::Format, "checkpoint header: expected '" + key + "', got '" + line + "'");
    return line.substr(key.size() + 1);
  };

  if (next_line() != kCheckpointMagic)
    throw Error(ErrorCode::Format, "not a tsppc checkpoint (or unsupported version): " + path);

  ModelConfig cfg;
  cfg.d_h = static_cast<int>(parse_int(field("d_h")));
  cfg.heads = static_cast<int>(parse_int(field("heads")));
  cfg.n_layers = static_cast<int>(parse_int(field("layers")));
  cfg.ff_dim = static_cast<int>(parse_int(field("ff_dim")));
  cfg.clip = parse_double(field("clip"));
  cfg.set_kinds(field("kinds"));
  cfg.check();

  Model m = Model::init(cfg, 0);
  m.sparsify_hint = field("sparsify");

  SectionList list(m);
  std::size_t nsections = static_cast<std::size_t>(parse_int(field("sections")));
  if (nsections != list.sections().size())
    throw Error(ErrorCode::Format, "checkpoint section count mismatch: header says " +
                                       std::to_string(nsections) + ", architecture requires " +
                                       std::to_string(list.sections().size()));
  for (const auto& s : list.sections()) {
    std::string line = next_line();
    std::string want = s.name + ' ' + std::to_string(s.count());
    if (line != want)
      throw Error(ErrorCode::Format,
                  "checkpoint section mismatch: expected '" + want + "', got '" + line + "'");
  }
  if (next_line() != "data") throw Error(ErrorCode::Format, "checkpoint missing data marker");

  std::vector<double> buf;
  for (const auto& s : list.sections()) {
    buf.resize(s.count());
    is.read(reinterpret_cast<char*>(buf.data()), buf.size() * sizeof(double));
    if (!is) throw Error(ErrorCode::Format, "checkpoint data truncated in section '" + s.name + "'");
    for (double v : buf)
      if (!std::isfinite(v))
        throw Error(ErrorCode::Format, "non-finite value in checkpoint section '" + s.name + "'");
    copy_in(s, buf);
  }
  return m;
}

}  // namespace tsppc
