#pragma once

#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "formlink/trainer/evaluate.hpp"
#include "formlink/trainer/train.hpp"

namespace formlink {

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from `start_epoch` (completed epochs) up to cfg.epochs. When
/// eval_every is set and eval_ds is given, gold-segmentation metrics are
/// attached to every eval_every-th epoch and to the last one.
inline TrainHistory train(Model& model, tc::AdamState& adam, const Dataset& ds, const TrainConfig& cfg,
                          std::size_t start_epoch = 0, const Dataset* eval_ds = nullptr,
                          const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (ds.pages.empty()) throw ConfigError("train: empty training split");
  TrainHistory hist;
  for (std::size_t e = start_epoch; e < cfg.epochs; ++e) {
    EpochRecord rec;
    rec.epoch = e + 1;
    rec.stats = train_epoch(model, adam, ds, cfg, e);
    if (eval_ds && cfg.eval_every > 0 && (rec.epoch % cfg.eval_every == 0 || rec.epoch == cfg.epochs))
      rec.report = evaluate(model, *eval_ds, true).report;
    if (on_epoch) on_epoch(rec);
    hist.push_back(std::move(rec));
  }
  return hist;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string history_csv_header() {
  return "epoch,l_crf,l_neg,total,pages,gold_source,predicted_source,links_used,links_unmatched,"
         "grouping_accuracy,map,mrank,hit1,hit2,hit5\n";
}

inline std::string history_csv_row(const EpochRecord& r) {
  std::ostringstream os;
  const auto& s = r.stats;
  os << r.epoch << ',' << format_double(s.l_crf) << ',' << format_double(s.l_neg) << ',' << format_double(s.total)
     << ',' << s.pages << ',' << s.gold_source << ',' << s.predicted_source << ',' << s.links_used << ','
     << s.links_unmatched;
  if (r.report) {
    const auto& m = *r.report;
    for (double v : {m.grouping_accuracy, m.map, m.mrank, m.hit1, m.hit2, m.hit5}) os << ',' << format_double(v);
  } else {
    os << ",,,,,,";
  }
  os << '\n';
  return os.str();
}

}  // namespace formlink
