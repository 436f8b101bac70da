#pragma once

#include <Eigen/Dense>

namespace persona {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One LSTM cell. Gate rows are stacked [input; forget; output; candidate].
struct LstmParams {
  Mat Wx;  // 4h x in
  Mat Wh;  // 4h x h
  Mat b;   // 4h x 1

  static LstmParams zeros(Eigen::Index input, Eigen::Index hidden);
  Eigen::Index hidden() const { return Wh.cols(); }
  Eigen::Index input() const { return Wx.cols(); }
  bool empty() const { return Wx.size() == 0; }
};

struct LstmState {
  Vec h;
  Vec c;

  static LstmState zeros(Eigen::Index hidden) { return {Vec::Zero(hidden), Vec::Zero(hidden)}; }
};

struct LstmStepCache {
  Vec x;
  LstmState prev;
  Vec i, f, o, g;
  Vec c;
  Vec tanh_c;
};

LstmState cell_step(const LstmParams& p, const Vec& x, const LstmState& prev, LstmStepCache* cache = nullptr);

// Accumulates parameter gradients into `grads`; returns dL/dx and writes the
// gradients flowing into the previous state.
Vec cell_step_backward(const LstmParams& p, const LstmStepCache& cache, const Vec& dh, const Vec& dc, LstmParams& grads,
                       LstmState& d_prev);

}  // namespace persona
