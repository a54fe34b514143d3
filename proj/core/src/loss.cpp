#include "seg4d/loss.hpp"

#include <string>

#include "seg4d/ops.hpp"

namespace seg4d {

double soft_dice(std::span<const double> truth, std::span<const double> pred, double eps) {
  if (truth.size() != pred.size()) throw Error(ErrorCode::kShapeMismatch, "soft_dice: truth and prediction sizes differ");
  double inter = 0.0, st = 0.0, sp = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    inter += truth[i] * pred[i];
    st += truth[i] * truth[i];
    sp += pred[i] * pred[i];
  }
  return 1.0 - 2.0 * inter / (st + sp + eps);
}

double soft_dice_frame(std::span<const double> truth, std::span<const double> pred, std::int64_t classes,
                       const LossOptions& options) {
  if (truth.size() != pred.size() || classes <= 0 || truth.size() % static_cast<std::size_t>(classes) != 0) {
    throw Error(ErrorCode::kShapeMismatch, "soft_dice_frame: inconsistent sizes");
  }
  const std::size_t vox = truth.size() / static_cast<std::size_t>(classes);
  const std::int64_t first = options.include_background ? 0 : 1;
  double total = 0.0;
  for (std::int64_t c = first; c < classes; ++c) {
    total += soft_dice(truth.subspan(static_cast<std::size_t>(c) * vox, vox),
                       pred.subspan(static_cast<std::size_t>(c) * vox, vox), options.dice_eps);
  }
  return total / static_cast<double>(classes - first);
}

namespace {

template <typename T>
void check_probs(const Tensor<T>& probs, const char* what) {
  if (probs.rank() != 6) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + " expects (N, C, X, Y, Z, K) probabilities");
  }
}

}  // namespace

template <typename T>
Tensor<T> sparse_dice_loss(Tape<T>* tape, const Tensor<T>& probs, const Tensor<T>& onehot,
                           const std::vector<bool>& labeled_mask, const LossOptions& options) {
  check_probs(probs, "sparse_dice_loss");
  if (onehot.shape() != probs.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "sparse_dice_loss: truth " + to_string(onehot.shape()) +
                                               " vs prediction " + to_string(probs.shape()));
  }
  const std::int64_t n = probs.dim(0), classes = probs.dim(1), frames = probs.dim(5);
  if (static_cast<std::int64_t>(labeled_mask.size()) != frames) {
    throw Error(ErrorCode::kShapeMismatch, "sparse_dice_loss: labeled mask must have one entry per frame");
  }
  const std::int64_t spatial = probs.dim(2) * probs.dim(3) * probs.dim(4);
  const std::int64_t first = options.include_background ? 0 : 1;
  const double counted = static_cast<double>(classes - first);

  struct Term {
    std::int64_t base;  // offset of (n, c, voxel 0, frame k)
    double inter, denom;
  };
  std::vector<Term> terms;
  const T* p = probs.data().data();
  const T* t = onehot.data().data();
  double value = 0.0;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t k = 0; k < frames; ++k) {
      if (!labeled_mask[static_cast<std::size_t>(k)]) continue;
      double frame = 0.0;
      for (std::int64_t c = first; c < classes; ++c) {
        const std::int64_t base = (b * classes + c) * spatial * frames + k;
        double inter = 0.0, st = 0.0, sp = 0.0;
        for (std::int64_t s = 0; s < spatial; ++s) {
          const double tv = t[base + s * frames], pv = p[base + s * frames];
          inter += tv * pv;
          st += tv * tv;
          sp += pv * pv;
        }
        const double denom = st + sp + options.dice_eps;
        frame += 1.0 - 2.0 * inter / denom;
        terms.push_back({base, inter, denom});
      }
      value += frame / counted;
    }
  }

  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(value), needs_grad(tape, probs));
  if (out.requires_grad()) {
    tape->record("sparse_dice_loss", out, [probs, onehot, out, terms = std::move(terms), spatial, frames, counted]() {
      const double g = out.grad()[0] / counted;
      T* gp = probs.ensure_grad().data();
      const T* pv = probs.data().data();
      const T* tv = onehot.data().data();
      for (const auto& term : terms) {
        const double a = -2.0 / term.denom;
        const double b = 4.0 * term.inter / (term.denom * term.denom);
        for (std::int64_t s = 0; s < spatial; ++s) {
          const std::int64_t i = term.base + s * frames;
          gp[i] += static_cast<T>(g * (a * tv[i] + b * pv[i]));
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> temporal_consistency(Tape<T>* tape, const Tensor<T>& probs, const LossOptions& options) {
  check_probs(probs, "temporal_consistency");
  const std::int64_t frames = probs.dim(5);
  const std::int64_t rows = probs.numel() / frames;  // (n, c, voxel) rows, frames contiguous
  const double norm =
      options.normalize_temporal ? static_cast<double>(probs.dim(1) * probs.dim(2) * probs.dim(3) * probs.dim(4)) : 1.0;
  const T* p = probs.data().data();
  double value = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = p + r * frames;
    for (std::int64_t k = 0; k + 1 < frames; ++k) {
      const double d = static_cast<double>(row[k + 1]) - row[k];
      value += d * d;
    }
  }
  value /= norm;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(value), needs_grad(tape, probs) && frames > 1);
  if (out.requires_grad()) {
    tape->record("temporal_consistency", out, [probs, out, frames, rows, norm]() {
      const double g = out.grad()[0] * 2.0 / norm;
      T* gp = probs.ensure_grad().data();
      const T* pv = probs.data().data();
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* row = pv + r * frames;
        T* grow = gp + r * frames;
        for (std::int64_t k = 0; k + 1 < frames; ++k) {
          const double d = g * (static_cast<double>(row[k + 1]) - row[k]);
          grow[k + 1] += static_cast<T>(d);
          grow[k] -= static_cast<T>(d);
        }
      }
    });
  }
  return out;
}

template <typename T>
LossResult<T> total_loss(Tape<T>* tape, const Tensor<T>& probs, const Tensor<T>& onehot,
                         const std::vector<bool>& labeled_mask, const LossOptions& options) {
  auto dice = sparse_dice_loss(tape, probs, onehot, labeled_mask, options);
  auto temporal = temporal_consistency(tape, probs, options);
  LossResult<T> r;
  r.total = add(tape, dice, temporal);
  r.breakdown.dice_term = static_cast<double>(dice.item());
  r.breakdown.temporal_term = static_cast<double>(temporal.item());
  r.breakdown.total = static_cast<double>(r.total.item());
  for (bool m : labeled_mask) r.breakdown.labeled_frames_used += m ? probs.dim(0) : 0;
  return r;
}

#define SEG4D_INSTANTIATE_LOSS(T)                                                                            \
  template Tensor<T> sparse_dice_loss<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const std::vector<bool>&, \
                                         const LossOptions&);                                                \
  template Tensor<T> temporal_consistency<T>(Tape<T>*, const Tensor<T>&, const LossOptions&);                \
  template LossResult<T> total_loss<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const std::vector<bool>&, \
                                       const LossOptions&);

SEG4D_INSTANTIATE_LOSS(float)
SEG4D_INSTANTIATE_LOSS(double)

#undef SEG4D_INSTANTIATE_LOSS

}  // namespace seg4d
