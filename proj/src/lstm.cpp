#include "persona/lstm.hpp"

namespace persona {

namespace {

Vec sigmoid(const Vec& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

}  // namespace

LstmParams LstmParams::zeros(Eigen::Index input, Eigen::Index hidden) {
  return {Mat::Zero(4 * hidden, input), Mat::Zero(4 * hidden, hidden), Mat::Zero(4 * hidden, 1)};
}

LstmState cell_step(const LstmParams& p, const Vec& x, const LstmState& prev, LstmStepCache* cache) {
  const Eigen::Index h = p.hidden();
  const Vec z = p.Wx * x + p.Wh * prev.h + p.b.col(0);
  Vec i = sigmoid(z.segment(0, h));
  Vec f = sigmoid(z.segment(h, h));
  Vec o = sigmoid(z.segment(2 * h, h));
  Vec g = z.segment(3 * h, h).array().tanh().matrix();
  Vec c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
  Vec tanh_c = c.array().tanh().matrix();
  LstmState next{o.cwiseProduct(tanh_c), c};
  if (cache) {
    cache->x = x;
    cache->prev = prev;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->o = std::move(o);
    cache->g = std::move(g);
    cache->c = std::move(c);
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

Vec cell_step_backward(const LstmParams& p, const LstmStepCache& k, const Vec& dh, const Vec& dc, LstmParams& grads,
                       LstmState& d_prev) {
  const Eigen::Index h = p.hidden();
  const Vec d_o = dh.cwiseProduct(k.tanh_c);
  const Vec dc_total = dc + dh.cwiseProduct(k.o).cwiseProduct((1.0 - k.tanh_c.array().square()).matrix());
  const Vec d_i = dc_total.cwiseProduct(k.g);
  const Vec d_g = dc_total.cwiseProduct(k.i);
  const Vec d_f = dc_total.cwiseProduct(k.prev.c);

  Vec dz(4 * h);
  dz.segment(0, h) = d_i.array() * k.i.array() * (1.0 - k.i.array());
  dz.segment(h, h) = d_f.array() * k.f.array() * (1.0 - k.f.array());
  dz.segment(2 * h, h) = d_o.array() * k.o.array() * (1.0 - k.o.array());
  dz.segment(3 * h, h) = d_g.array() * (1.0 - k.g.array().square());

  grads.Wx.noalias() += dz * k.x.transpose();
  grads.Wh.noalias() += dz * k.prev.h.transpose();
  grads.b.col(0) += dz;

  d_prev.h = p.Wh.transpose() * dz;
  d_prev.c = dc_total.cwiseProduct(k.f);
  return p.Wx.transpose() * dz;
}

}  // namespace persona
