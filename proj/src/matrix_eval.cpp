#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"
#include "persona/errors.hpp"
#include "persona/eval.hpp"

namespace persona {

void EvalConfig::validate() const {
  if (n_distractors < 1) throw ValidationError("eval: n_distractors must be >= 1");
  if (models.empty()) throw ValidationError("eval: no models");
  if (modes.empty()) throw ValidationError("eval: no conditioning modes");
  if (variants.empty() || train_variants.empty()) throw ValidationError("eval: no persona variants");
}

const ReportRow* EvalReport::find(const CellKey& key) const {
  for (const auto& r : rows)
    if (r.key == key) return &r;
  return nullptr;
}

namespace {

std::string fmt(double v, int precision) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string group_name(const CellKey& k) {
  if (k.mode == ConditioningMode::none) return "no persona";
  return std::string(to_string(k.mode)) + "/" + std::string(to_string(k.variant));
}

std::string row_name(const CellKey& k) { return k.model + " [train " + std::string(to_string(k.train_variant)) + "]"; }

}  // namespace

std::string EvalReport::to_table() const {
  // Column groups and row labels in first-seen order.
  std::vector<std::string> groups;
  std::vector<std::string> names;
  std::map<std::pair<std::string, std::string>, const ReportRow*> cell;
  for (const auto& r : rows) {
    const std::string g = group_name(r.key);
    const std::string n = row_name(r.key);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    cell[{n, g}] = &r;
  }

  // Each group shows PPL, Hits@1 and F1.
  const char* metrics[] = {"PPL", "Hits@1", "F1"};
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> head1{""}, head2{"Method"};
  for (const auto& g : groups) {
    for (int m = 0; m < 3; ++m) {
      head1.push_back(m == 0 ? g : "");
      head2.push_back(metrics[m]);
    }
  }
  grid.push_back(head1);
  grid.push_back(head2);
  for (const auto& n : names) {
    std::vector<std::string> line{n};
    for (const auto& g : groups) {
      auto it = cell.find({n, g});
      const ReportRow* r = it == cell.end() ? nullptr : it->second;
      if (!r || r->empty) {
        line.insert(line.end(), {"-", "-", "-"});
        continue;
      }
      line.push_back(r->perplexity ? fmt(*r->perplexity, 2) : "-");
      line.push_back(r->hits_at_1 ? fmt(*r->hits_at_1, 3) : "-");
      line.push_back(r->f1 ? fmt(*r->f1, 3) : "-");
    }
    grid.push_back(std::move(line));
  }

  std::vector<std::size_t> width(grid[1].size(), 0);
  for (const auto& line : grid)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());

  std::ostringstream out;
  for (const auto& line : grid) {
    std::string s;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) s += "  ";
      std::string v = line[c];
      if (c == 0) v.resize(width[c], ' ');
      else v = std::string(width[c] - v.size(), ' ') + v;
      s += v;
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    out << s << '\n';
  }
  return out.str();
}

std::string EvalReport::to_jsonl() const {
  std::ostringstream out;
  for (const auto& r : rows) {
    auto emit = [&](const char* metric, const std::optional<double>& v) {
      nlohmann::ordered_json j;
      j["model"] = r.key.model;
      j["train_variant"] = to_string(r.key.train_variant);
      j["mode"] = to_string(r.key.mode);
      j["variant"] = to_string(r.key.variant);
      j["metric"] = metric;
      j["value"] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
      j["n"] = r.n;
      out << j.dump() << '\n';
    };
    if (r.empty) {
      emit("hits@1", std::nullopt);
      continue;
    }
    if (r.hits_at_1) emit("hits@1", r.hits_at_1);
    if (r.perplexity) emit("ppl", r.perplexity);
    if (r.f1) emit("f1", r.f1);
  }
  return out.str();
}

EvalReport run_matrix(const std::vector<Episode>& episodes, const ModelProvider& models, const EvalConfig& config,
                      std::vector<std::string>* warnings) {
  config.validate();
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  const std::vector<Episode> eps = with_sampled_candidates(episodes, config.n_distractors, config.seed);

  EvalReport report;
  for (const auto& model : config.models) {
    for (Variant train : config.train_variants) {
      for (ConditioningMode mode : config.modes) {
        // Unconditioned cells do not depend on the persona variant.
        std::vector<Variant> variants = config.variants;
        if (mode == ConditioningMode::none) variants = {config.variants.front()};
        for (Variant variant : variants) {
          ReportRow row;
          row.key = CellKey{model, train, mode, variant};
          const std::string label = row_name(row.key) + " " + group_name(row.key);

          std::vector<Example> examples;
          try {
            examples = build_examples(eps, ExampleOptions{mode, variant, config.side});
          } catch (const ValidationError& e) {
            warn(label + ": " + e.what());
            row.empty = true;
            report.rows.push_back(std::move(row));
            continue;
          }
          if (examples.empty()) {
            warn(label + ": no evaluation examples");
            row.empty = true;
            report.rows.push_back(std::move(row));
            continue;
          }
          const std::optional<ModelSlot> slot = models(row.key);
          if (!slot || !slot->ranker) {
            warn(label + ": no model, cell left empty");
            row.empty = true;
            report.rows.push_back(std::move(row));
            continue;
          }
          row.n = examples.size();
          row.hits_at_1 = hits_at_1(*slot->ranker, examples);
          if (slot->generative) {
            row.perplexity = perplexity(*slot->generative, examples);
            row.f1 = mean_f1(*slot->generative, examples);
          }
          report.rows.push_back(std::move(row));
        }
      }
    }
  }
  return report;
}

}  // namespace persona
