#include <cstring>
#include <fstream>
#include <sstream>

#include "persona/binary_io.hpp"
#include "persona/errors.hpp"
#include "persona/generative.hpp"

namespace persona {

namespace {

constexpr char kGenMagic[4] = {'P', 'G', 'E', 'N'};
constexpr std::uint32_t kGenVersion = 1;

}  // namespace

void save_generative(const std::string& path, const GenerativeModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const GenConfig& cfg = model.config();
  out.write(kGenMagic, 4);
  bin::write_u32(out, kGenVersion);
  bin::write_u32(out, static_cast<std::uint32_t>(cfg.mode));
  bin::write_u32(out, static_cast<std::uint32_t>(model.output_size()));
  bin::write_u32(out, static_cast<std::uint32_t>(cfg.embed));
  bin::write_u32(out, static_cast<std::uint32_t>(cfg.hidden));
  bin::write_u32(out, static_cast<std::uint32_t>(kTokenizerVersion));
  bin::write_u64(out, model.vocab().fingerprint());
  bin::write_u32(out, static_cast<std::uint32_t>(cfg.max_decode_len));
  bin::write_u32(out, static_cast<std::uint32_t>(cfg.max_source_tokens));
  bin::write_u32(out, cfg.length_normalize ? 1u : 0u);
  // Blocks in GenParams::blocks() order, each row-major.
  for (const Mat* m : model.params().blocks()) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = *m;
    bin::write_f64s(out, rm.data(), static_cast<std::size_t>(rm.size()));
  }
  if (!out) throw Error("write failed for " + path);
  model.vocab().save_file(path + ".vocab");
}

std::unique_ptr<GenerativeModel> load_generative(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read model " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kGenMagic, 4) != 0) throw ValidationError(path + ": not a PGEN generative file");
  const std::uint32_t version = bin::read_u32(in);
  if (version != kGenVersion) throw ValidationError(path + ": unsupported generative version " + std::to_string(version));
  const std::uint32_t mode = bin::read_u32(in);
  if (mode > static_cast<std::uint32_t>(GenMode::profile_memory)) throw ValidationError(path + ": unknown mode");
  const std::uint32_t K = bin::read_u32(in);
  const std::uint32_t e = bin::read_u32(in);
  const std::uint32_t h = bin::read_u32(in);
  const std::uint32_t tokenizer = bin::read_u32(in);
  const std::uint64_t fingerprint = bin::read_u64(in);
  if (tokenizer != static_cast<std::uint32_t>(kTokenizerVersion)) throw ValidationError(path + ": tokenizer mismatch");

  GenConfig cfg;
  cfg.mode = static_cast<GenMode>(mode);
  cfg.embed = e;
  cfg.hidden = h;
  cfg.max_decode_len = bin::read_u32(in);
  cfg.max_source_tokens = bin::read_u32(in);
  cfg.length_normalize = bin::read_u32(in) != 0;

  GenParams params = GenParams::zeros(cfg.mode, K, e, h);
  for (Mat* m : params.blocks()) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m->rows(), m->cols());
    bin::read_f64s(in, rm.data(), static_cast<std::size_t>(rm.size()));
    *m = rm;
  }
  Vocabulary vocab = Vocabulary::load_file(path + ".vocab");
  if (vocab.fingerprint() != fingerprint) throw ValidationError(path + ": vocabulary sidecar does not match the model");
  if (vocab.size() + 1 != K) throw ValidationError(path + ": vocabulary size does not match the model");
  return std::make_unique<GenerativeModel>(std::move(vocab), cfg, std::move(params));
}

std::size_t load_text_vectors(GenerativeModel& model, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read vectors " + path);
  const auto dim = static_cast<Eigen::Index>(model.config().embed);
  std::size_t loaded = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    Vec v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (!(ls >> v[i])) {
        throw ValidationError(path + ": line " + std::to_string(line_no) + " has fewer than " + std::to_string(dim) +
                              " values");
      }
    }
    if (!model.vocab().contains(token)) continue;
    model.params().E.row(to_gen_id(model.vocab().id(token))) = v.transpose();
    ++loaded;
  }
  return loaded;
}

}  // namespace persona
