#include "qitsa/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "qitsa/error.hpp"

namespace qitsa {

std::string_view to_string(Fusion f) { return f == Fusion::QAttention ? "q_attention" : "mean"; }

Fusion parse_fusion(std::string_view text) {
  if (text == "q_attention") return Fusion::QAttention;
  if (text == "mean") return Fusion::Mean;
  throw Error("unknown fusion '" + std::string(text) + "'");
}

std::string_view to_string(AmplitudeSource s) {
  return s == AmplitudeSource::EmbeddingTable ? "embedding_table" : "precomputed_file";
}

AmplitudeSource parse_amplitude_source(std::string_view text) {
  if (text == "embedding_table") return AmplitudeSource::EmbeddingTable;
  if (text == "precomputed_file") return AmplitudeSource::PrecomputedFile;
  throw Error("unknown amplitude source '" + std::string(text) + "'");
}

QitsaModel::QitsaModel(ModelConfig cfg, Vocabulary vocab, qembed::EmbeddingTable amplitude,
                       qembed::EmbeddingTable phase)
    : QitsaModel(cfg, std::move(vocab), std::move(amplitude), std::move(phase), Rng(cfg.seed)) {}

// Members initialise in declaration order, which fixes the draw order from
// the seeded generator.
QitsaModel::QitsaModel(ModelConfig cfg, Vocabulary vocab, qembed::EmbeddingTable amplitude,
                       qembed::EmbeddingTable phase, Rng&& rng)
    : cfg_(cfg),
      vocab_(std::move(vocab)),
      amplitude_(std::move(amplitude)),
      phase_(std::move(phase)),
      lstm_amplitude_(featext::LstmParams::init(cfg.dim, cfg.hidden(), rng, "lstm_amplitude")),
      lstm_phase_(featext::LstmParams::init(cfg.dim, cfg.hidden(), rng, "lstm_phase")),
      attention_(featext::AttentionParams::init(cfg.hidden(), rng, "attention")),
      mixture_(qembed::MixtureWeights::ones(true)),
      reduce_real_(cfg.hidden(), cfg.reduction, rng, "reduce_real"),
      reduce_imag_(cfg.hidden(), cfg.reduction, rng, "reduce_imag"),
      classifier_(head::ClassifierParams::init(reduce_real_.feature_dim(), rng, "classifier")) {
  for (const auto* t : {&amplitude_, &phase_})
    if (t->rows() != vocab_.size() || t->dim() != cfg_.dim)
      throw ShapeError("lookup table is " + ad::shape_string(t->weights().shape()) + ", expected [" +
                       std::to_string(vocab_.size()) + "x" + std::to_string(cfg_.dim) + "]");
}

ForwardTrace QitsaModel::forward(std::span<const TokenId> ids) const {
  if (ids.empty()) throw Error("forward: empty sentence");
  ForwardTrace t;
  t.mask = qembed::token_mask(ids);
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (t.mask[i]) t.kept_ids.push_back(ids[i]);
  if (t.kept_ids.empty()) throw Error("forward: sentence has only padding");

  ad::Node amp = qembed::lookup_amplitude(ids, amplitude_);
  ad::Node pha = qembed::lookup_phase(ids, phase_);
  t.inputs = qembed::euler_split(amp, pha);

  ad::Node r = featext::self_attention(featext::lstm_forward(amp, lstm_amplitude_, t.mask), attention_, t.mask);
  ad::Node beta = featext::lstm_forward(pha, lstm_phase_, t.mask);
  t.features = qembed::euler_split(r, beta);

  t.words = qembed::word_densities(t.features, t.mask, cfg_.normalize_words);
  if (cfg_.fusion == Fusion::QAttention) {
    t.alpha_real = qembed::q_attention(t.words, qembed::DensityPart::Real).alpha;
    t.alpha_imag = qembed::q_attention(t.words, qembed::DensityPart::Imag).alpha;
  } else {
    t.alpha_real = t.alpha_imag = qembed::uniform_weights(t.words.size());
  }
  t.sentence.real = qembed::fuse_part(t.words, t.alpha_real, qembed::DensityPart::Real, ad::slice(mixture_.part, 0, 1));
  t.sentence.imag = qembed::fuse_part(t.words, t.alpha_imag, qembed::DensityPart::Imag, ad::slice(mixture_.part, 1, 2));

  t.f_real = reduce_real_.forward(t.sentence.real);
  t.f_imag = reduce_imag_.forward(t.sentence.imag);
  t.probability = head::classify(t.f_real, t.f_imag, classifier_);
  return t;
}

double QitsaModel::predict(std::span<const TokenId> ids) const {
  ad::NoGradGuard guard;
  return forward(ids).probability.item();
}

std::vector<std::pair<std::string, ad::Node>> QitsaModel::state() const {
  std::vector<std::pair<std::string, ad::Node>> out;
  out.emplace_back("amplitude.table", amplitude_.weights());
  out.emplace_back("phase.table", phase_.weights());
  auto add = [&](const std::vector<ad::Node>& nodes) {
    for (const auto& n : nodes) out.emplace_back(n.name(), n);
  };
  add(lstm_amplitude_.parameters());
  add(lstm_phase_.parameters());
  add(attention_.parameters());
  add({mixture_.part});
  add(reduce_real_.parameters());
  add(reduce_imag_.parameters());
  add(classifier_.parameters());
  return out;
}

std::vector<ad::Node> QitsaModel::parameters() const {
  std::vector<ad::Node> out;
  for (auto& [name, node] : state())
    if (node.requires_grad()) out.push_back(node);
  return out;
}

QitsaModel build_model(const ModelConfig& cfg, const Vocabulary& vocab, const ModelAssets& assets) {
  if (cfg.dim == 0) throw Error("dim must be positive");
  qembed::EmbeddingTable amplitude;
  if (cfg.amplitude_source == AmplitudeSource::PrecomputedFile) {
    if (!assets.precomputed) throw Error("amplitude source 'precomputed_file' needs a precomputed vector file");
    amplitude = qembed::EmbeddingTable(*assets.precomputed, cfg.trainable_amplitude, "amplitude.table");
  } else if (assets.word_vectors) {
    amplitude = qembed::EmbeddingTable(*assets.word_vectors, cfg.trainable_amplitude, "amplitude.table");
  } else {
    amplitude = qembed::EmbeddingTable(random_amplitude_table(vocab, cfg.dim, cfg.seed + 1), cfg.trainable_amplitude,
                                       "amplitude.table");
  }
  qembed::PhaseAssets phase_assets;
  phase_assets.lexicon = assets.lexicon;
  phase_assets.vectors =
      cfg.phase_source == qembed::PhaseSource::PrecomputedFile ? assets.precomputed : assets.word_vectors;
  phase_assets.seed = cfg.seed + 2;
  auto phase = qembed::make_phase_table(cfg.phase_source, vocab, cfg.dim, phase_assets);
  return QitsaModel(cfg, vocab, std::move(amplitude), std::move(phase));
}

// ---- checkpoint --------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void put(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(std::string_view s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void str32(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string file) : is_(is), file_(std::move(file)) {}
  template <typename T>
  T get() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) fail("truncated file");
    return v;
  }
  std::string bytes(std::uint64_t n) {
    if (n > (1ull << 32)) fail("implausible length");
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (!is_) fail("truncated file");
    return s;
  }
  std::string str32() { return bytes(get<std::uint32_t>()); }
  [[noreturn]] void fail(const std::string& why) { throw ParseError(file_, 0, "checkpoint: " + why); }

 private:
  std::istream& is_;
  std::string file_;
};

}  // namespace

const Checkpoint::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw Error("checkpoint has no tensor '" + name + "'");
}

Checkpoint make_checkpoint(const QitsaModel& model, std::string config_text) {
  Checkpoint ckpt;
  ckpt.config_text = std::move(config_text);
  ckpt.vocab_tokens = model.vocab().tokens();
  for (const auto& [name, node] : model.state()) ckpt.tensors.push_back({name, {node.requires_grad(), node.value()}});
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  Writer w(os);
  w.bytes(std::string_view(Checkpoint::kMagic, sizeof(Checkpoint::kMagic)));
  w.put<std::uint32_t>(Checkpoint::kVersion);
  w.put<std::uint64_t>(ckpt.config_text.size());
  w.bytes(ckpt.config_text);
  w.put<std::uint64_t>(ckpt.vocab_tokens.size());
  for (const auto& t : ckpt.vocab_tokens) w.str32(t);
  w.put<std::uint64_t>(ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    w.str32(name);
    w.put<std::uint8_t>(t.trainable ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.value.rank()));
    for (auto e : t.value.shape()) w.put<std::uint64_t>(e);
    for (double v : t.value.data()) w.put<double>(v);
  }
  if (!os) throw Error("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  Reader r(is, path.string());
  if (r.bytes(sizeof(Checkpoint::kMagic)) != std::string_view(Checkpoint::kMagic, sizeof(Checkpoint::kMagic)))
    r.fail("bad magic");
  if (auto v = r.get<std::uint32_t>(); v != Checkpoint::kVersion) r.fail("unsupported version " + std::to_string(v));
  Checkpoint ckpt;
  ckpt.config_text = r.bytes(r.get<std::uint64_t>());
  const auto vocab_size = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < vocab_size; ++i) ckpt.vocab_tokens.push_back(r.str32());
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str32();
    Checkpoint::Tensor t;
    t.trainable = r.get<std::uint8_t>() != 0;
    const auto rank = r.get<std::uint32_t>();
    if (rank < 1 || rank > 4) r.fail("tensor '" + name + "' has rank " + std::to_string(rank));
    ad::Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.get<std::uint64_t>());
    std::vector<double> values(ad::shape_size(shape));
    for (double& v : values) v = r.get<double>();
    t.value = ad::Array(std::move(shape), std::move(values));
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");
  return ckpt;
}

QitsaModel model_from_checkpoint(const ModelConfig& cfg, const Checkpoint& ckpt) {
  Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab_tokens);
  const auto& amp = ckpt.tensor("amplitude.table");
  const auto& pha = ckpt.tensor("phase.table");
  QitsaModel model(cfg, std::move(vocab), qembed::EmbeddingTable(amp.value, amp.trainable, "amplitude.table"),
                   qembed::EmbeddingTable(pha.value, pha.trainable, "phase.table"));
  auto state = model.state();
  if (state.size() != ckpt.tensors.size())
    throw Error("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                std::to_string(state.size()));
  for (auto& [name, node] : state) {
    const auto& t = ckpt.tensor(name);
    if (t.value.shape() != node.shape())
      throw ShapeError("checkpoint tensor '" + name + "' is " + ad::shape_string(t.value.shape()) + ", model expects " +
                       ad::shape_string(node.shape()));
    node.mutable_value() = t.value;
  }
  return model;
}

}  // namespace qitsa
