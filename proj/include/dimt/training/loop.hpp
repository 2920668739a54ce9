#pragma once

// Generic optimisation loop: deterministic data order, per-sample graphs with
// gradient accumulation, clipping, Adam, JSONL logging, periodic validation,
// checkpoints with optimizer state, and resume.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "dimt/core/autograd.hpp"
#include "dimt/core/errors.hpp"
#include "dimt/core/hash.hpp"
#include "dimt/core/jsonio.hpp"
#include "dimt/core/params.hpp"
#include "dimt/training/optim.hpp"

namespace dimt {

struct LoopConfig {
  double lr = 5e-5;
  int warmup = 1000;
  int max_steps = 3000;
  int batch = 16;
  double clip = 1.0;  // global gradient norm; 0 disables
  std::uint64_t seed = 1;
  int checkpoint_every = 500;
  int validate_every = 250;
  int stop_after = 0;  // end this invocation early at this step; 0 runs to max_steps

  void validate() const {
    if (max_steps < 1) throw ContractError("max_steps must be at least 1");
    if (warmup < 0 || warmup > max_steps) throw ContractError("warmup must lie in [0, max_steps]");
    if (batch < 1) throw ContractError("batch must be at least 1");
    if (lr < 0) throw ContractError("learning rate must be non-negative");
    if (clip < 0) throw ContractError("clip must be non-negative");
    if (checkpoint_every < 0 || validate_every < 0 || stop_after < 0)
      throw ContractError("intervals must be non-negative");
  }
  [[nodiscard]] Schedule schedule() const { return {lr, warmup, max_steps}; }
};

/// Sample order: one seeded permutation per epoch, consumed batch by batch.
class DataOrder {
 public:
  DataOrder(std::uint64_t seed, std::size_t n) : seed_(seed), n_(n) {
    if (n == 0) throw DataError("training split is empty");
  }

  /// Sample indices of the given 1-based step.
  std::vector<std::size_t> batch(int step, int size) {
    std::vector<std::size_t> out;
    for (int j = 0; j < size; ++j) {
      const std::uint64_t pos = static_cast<std::uint64_t>(step - 1) * static_cast<std::uint64_t>(size) +
                                static_cast<std::uint64_t>(j);
      out.push_back(permutation(pos / n_)[pos % n_]);
    }
    return out;
  }

 private:
  const std::vector<std::size_t>& permutation(std::uint64_t epoch) {
    auto it = cache_.find(epoch);
    if (it != cache_.end()) return it->second;
    if (cache_.size() > 4) cache_.erase(cache_.begin());
    std::vector<std::size_t> p(n_);
    std::iota(p.begin(), p.end(), std::size_t{0});
    Fnv1a h;
    h.update(&seed_, sizeof seed_);
    h.update(&epoch, sizeof epoch);
    std::mt19937_64 rng(h.digest());
    for (std::size_t i = n_; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> d(0, i - 1);
      std::swap(p[i - 1], p[d(rng)]);
    }
    return cache_.emplace(epoch, std::move(p)).first->second;
  }

  std::uint64_t seed_;
  std::size_t n_;
  std::map<std::uint64_t, std::vector<std::size_t>> cache_;
};

struct StepRecord {
  int step = 0;
  double lr = 0;
  double alpha = 0;
  double align = 0;
  double trans = 0;
  double total = 0;
  double grad_norm = 0;
};

inline Json to_json(const StepRecord& r) {
  return Json{{"type", "step"},   {"step", r.step},   {"lr", r.lr},       {"alpha", r.alpha},
              {"align", r.align}, {"trans", r.trans}, {"total", r.total}, {"grad_norm", r.grad_norm}};
}

inline StepRecord step_record_from_json(const Json& j) {
  StepRecord r;
  r.step = j.at("step").get<int>();
  r.lr = j.at("lr").get<double>();
  r.alpha = j.at("alpha").get<double>();
  r.align = j.at("align").get<double>();
  r.trans = j.at("trans").get<double>();
  r.total = j.at("total").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  return r;
}

/// Per-sample loss pieces. `total` drives the gradient; the doubles are logged.
template <class T>
struct LossParts {
  typename Graph<T>::Var total;
  double align = 0;
  double trans = 0;
};

template <class T>
struct LoopHooks {
  std::function<LossParts<T>(Graph<T>&, std::size_t sample)> loss;
  std::function<std::string(std::size_t sample)> sample_name;
  std::function<Json(int step)> validate;  // optional; returns a record without type/step
  std::function<void(const std::filesystem::path&, int step, const Adam<T>&)> save;
  std::function<int(const std::filesystem::path&, Adam<T>&)> load;  // returns the stored step
};

struct LoopResult {
  std::vector<StepRecord> steps;
  std::vector<Json> validations;
  int last_step = 0;
  bool completed = false;
  std::filesystem::path last_checkpoint;
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int step) {
  return dir / "checkpoints" / ("step-" + std::to_string(step) + ".ckpt");
}

/// Highest step-N.ckpt under dir/checkpoints, if any.
inline std::optional<std::pair<int, std::filesystem::path>> latest_checkpoint(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path cdir = dir / "checkpoints";
  if (!fs::exists(cdir)) return std::nullopt;
  static const std::regex pat(R"(step-(\d+)\.ckpt)");
  std::optional<std::pair<int, fs::path>> best;
  for (const auto& e : fs::directory_iterator(cdir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (!std::regex_match(name, m, pat)) continue;
    const int s = std::stoi(m[1].str());
    if (!best || s > best->first) best = std::make_pair(s, e.path());
  }
  return best;
}

/// Log lines with step <= last_step; everything later is dropped on resume.
inline std::vector<Json> read_log_until(const std::filesystem::path& log, int last_step) {
  std::vector<Json> out;
  std::ifstream is(log);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception&) {
      break;  // torn final line from an interrupted run
    }
    if (j.value("step", 0) <= last_step && j.value("type", "") != "error") out.push_back(std::move(j));
  }
  return out;
}

template <class T>
LoopResult run_training(ParameterStore<T>& store, std::size_t n_train, const LoopConfig& cfg, double alpha,
                        const std::filesystem::path& out, bool resume, const LoopHooks<T>& hooks) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(out / "checkpoints");
  const fs::path log_path = out / "train_log.jsonl";
  Adam<T> adam(store);
  DataOrder order(cfg.seed, n_train);
  LoopResult res;
  int start = 0;

  std::vector<Json> kept;
  if (resume) {
    if (auto latest = latest_checkpoint(out)) {
      start = hooks.load(latest->second, adam);
      if (start != latest->first) throw DataError("checkpoint step does not match its file name");
      kept = read_log_until(log_path, start);
      res.last_checkpoint = latest->second;
    }
  }
  {
    std::ofstream os(log_path, std::ios::trunc);
    for (const auto& j : kept) os << j.dump() << '\n';
  }
  for (const auto& j : kept) {
    if (j.value("type", "") == "step") res.steps.push_back(step_record_from_json(j));
    if (j.value("type", "") == "valid") res.validations.push_back(j);
  }
  std::ofstream log(log_path, std::ios::app);

  auto run_validation = [&](int step) {
    if (!hooks.validate) return;
    Json v = hooks.validate(step);
    Json rec{{"type", "valid"}, {"step", step}};
    for (auto& [k, val] : v.items()) rec[k] = val;
    log << rec.dump() << '\n' << std::flush;
    res.validations.push_back(rec);
  };
  auto save = [&](int step) {
    const fs::path p = checkpoint_path(out, step);
    hooks.save(p, step, adam);
    res.last_checkpoint = p;
  };

  if (start == 0 && cfg.validate_every > 0) run_validation(0);

  GradientBuffer<T> grads(store);
  const int end = cfg.stop_after > 0 ? std::min(cfg.stop_after, cfg.max_steps) : cfg.max_steps;
  for (int step = start + 1; step <= end; ++step) {
    const double lr = lr_schedule(step, cfg.schedule());
    grads.zero();
    double align_sum = 0, trans_sum = 0;
    const auto batch = order.batch(step, cfg.batch);
    for (std::size_t idx : batch) {
      Graph<T> g(true);
      LossParts<T> parts = hooks.loss(g, idx);
      if (!std::isfinite(parts.align) || !std::isfinite(parts.trans) || !std::isfinite(g.value(parts.total)[0])) {
        Json err{{"type", "error"},    {"step", step},        {"sample", hooks.sample_name ? hooks.sample_name(idx) : std::to_string(idx)},
                 {"align", parts.align}, {"trans", parts.trans}, {"reason", "non-finite loss"}};
        log << err.dump() << '\n' << std::flush;
        throw NumericalError("non-finite loss at step " + std::to_string(step) + " on sample " +
                             err.at("sample").get<std::string>());
      }
      g.backward(parts.total, static_cast<T>(1.0 / static_cast<double>(batch.size())));
      grads.accumulate(g, store);
      align_sum += parts.align;
      trans_sum += parts.trans;
    }
    const double norm = grads.clip(cfg.clip);
    if (!std::isfinite(norm)) {
      Json err{{"type", "error"}, {"step", step}, {"reason", "non-finite gradient"}};
      log << err.dump() << '\n' << std::flush;
      throw NumericalError("non-finite gradient at step " + std::to_string(step));
    }
    adam.step(store, grads, lr);

    StepRecord r;
    r.step = step;
    r.lr = lr;
    r.alpha = alpha;
    r.align = align_sum / static_cast<double>(batch.size());
    r.trans = trans_sum / static_cast<double>(batch.size());
    r.total = alpha * r.align + r.trans;
    r.grad_norm = norm;
    log << to_json(r).dump() << '\n';
    res.steps.push_back(r);

    if (cfg.validate_every > 0 && (step % cfg.validate_every == 0 || step == cfg.max_steps)) run_validation(step);
    if ((cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) || step == cfg.max_steps || step == end)
      save(step);
    log << std::flush;
  }
  res.last_step = std::max(start, end);
  res.completed = res.last_step >= cfg.max_steps;
  return res;
}

}  // namespace dimt
