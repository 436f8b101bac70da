#include <bit>
#include <cstring>
#include <fstream>

#include "persona/binary_io.hpp"
#include "persona/errors.hpp"
#include "persona/rankers.hpp"

namespace persona {

namespace {

constexpr char kRankerMagic[4] = {'P', 'R', 'N', 'K'};
constexpr std::uint32_t kRankerVersion = 1;

constexpr std::uint32_t kFlagAttention = 1u << 0;
constexpr std::uint32_t kFlagKv = 1u << 1;
constexpr std::uint32_t kFlagKvResidual = 1u << 2;
constexpr int kHopsShift = 8;

}  // namespace

void save_kv(std::ostream& out, const KvStore& store) {
  bin::write_u64(out, store.entries.size());
  bin::write_u64(out, store.top_m == kUnlimitedTopM ? UINT64_MAX : store.top_m);
  for (const auto& e : store.entries) {
    bin::write_f64s(out, e.key.data(), static_cast<std::size_t>(e.key.size()));
    bin::write_f64s(out, e.value.data(), static_cast<std::size_t>(e.value.size()));
    bin::write_string(out, e.text);
  }
}

KvStore load_kv(std::istream& in, std::size_t dim) {
  KvStore store;
  const std::uint64_t count = bin::read_u64(in);
  const std::uint64_t top_m = bin::read_u64(in);
  store.top_m = top_m == UINT64_MAX ? kUnlimitedTopM : static_cast<std::size_t>(top_m);
  if (count == 0) throw ValidationError("kv store: empty");
  store.entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    KvEntry e;
    e.key.resize(static_cast<Eigen::Index>(dim));
    e.value.resize(static_cast<Eigen::Index>(dim));
    bin::read_f64s(in, e.key.data(), dim);
    bin::read_f64s(in, e.value.data(), dim);
    e.text = bin::read_string(in);
    store.entries.push_back(std::move(e));
  }
  return store;
}

void save_ranker(const std::string& path, const EmbeddingRanker& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const auto& emb = model.embeddings();
  std::uint32_t flags = static_cast<std::uint32_t>(model.hops()) << kHopsShift;
  if (model.kind() != RankerKind::plain) flags |= kFlagAttention;
  if (model.kv()) flags |= kFlagKv;
  if (model.kv_residual()) flags |= kFlagKvResidual;

  out.write(kRankerMagic, 4);
  bin::write_u32(out, kRankerVersion);
  bin::write_u32(out, static_cast<std::uint32_t>(emb.dim()));
  bin::write_u32(out, static_cast<std::uint32_t>(emb.rows()));
  bin::write_u32(out, static_cast<std::uint32_t>(emb.tokenizer_version));
  bin::write_u64(out, model.vocab().fingerprint());
  bin::write_u32(out, flags);
  // Eigen is column-major; rows are written one at a time.
  Vec row(emb.W.cols());
  for (Eigen::Index r = 0; r < emb.W.rows(); ++r) {
    row = emb.W.row(r).transpose();
    bin::write_f64s(out, row.data(), static_cast<std::size_t>(row.size()));
  }
  if (model.kv()) save_kv(out, *model.kv());
  if (!out) throw Error("write failed for " + path);
  model.vocab().save_file(path + ".vocab");
}

std::unique_ptr<EmbeddingRanker> load_ranker(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read model " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kRankerMagic, 4) != 0) throw ValidationError(path + ": not a PRNK ranker file");
  const std::uint32_t version = bin::read_u32(in);
  if (version != kRankerVersion) throw ValidationError(path + ": unsupported ranker version " + std::to_string(version));
  const std::uint32_t d = bin::read_u32(in);
  const std::uint32_t D = bin::read_u32(in);
  const std::uint32_t tokenizer = bin::read_u32(in);
  const std::uint64_t fingerprint = bin::read_u64(in);
  const std::uint32_t flags = bin::read_u32(in);
  if (tokenizer != static_cast<std::uint32_t>(kTokenizerVersion)) {
    throw ValidationError(path + ": tokenizer version " + std::to_string(tokenizer) + " is not supported");
  }

  EmbeddingMatrix emb;
  emb.tokenizer_version = static_cast<int>(tokenizer);
  emb.vocab_fingerprint = fingerprint;
  emb.W.resize(D, d);
  Vec row(d);
  for (std::uint32_t r = 0; r < D; ++r) {
    bin::read_f64s(in, row.data(), d);
    if (!row.allFinite()) throw ValidationError(path + ": non-finite embedding in row " + std::to_string(r));
    emb.W.row(r) = row.transpose();
  }
  const RankerKind kind = (flags & kFlagAttention) ? RankerKind::profile_memory : RankerKind::plain;
  const int hops = static_cast<int>((flags >> kHopsShift) & 0xffu);
  auto model = std::make_unique<EmbeddingRanker>(Vocabulary::load_file(path + ".vocab"), std::move(emb), kind,
                                                 std::max(hops, 1));
  if (flags & kFlagKv) model->attach_kv(load_kv(in, d), (flags & kFlagKvResidual) != 0);
  return model;
}

}  // namespace persona
