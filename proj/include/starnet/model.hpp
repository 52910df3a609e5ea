#pragma once

// The space-time super-resolution network.
//
//   Stage 1  H_t  = S(I_t, I_t1, F_bwd)      L_t  = D(H_t)
//            H_t1 = S(I_t1, I_t, F_fwd)      L_t1 = D(H_t1)
//            M    = Motion(F_fwd, F_bwd)
//            H_tn, L_tn = ST(H_t, H_t1, L_t, L_t1, M)
//   Stage 2  back/forward projections through B and F with ReLU-gated
//            residual corrections of every feature map
//   Stage 3  one conv per output image
//
// An optional U-Net first refines both input flows.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "starnet/convert.hpp"
#include "starnet/layers.hpp"

namespace starnet {

struct AblationFlags {
  bool use_stage2 = true;
  bool use_flow_input = true;
  bool use_flow_refinement = true;
  bool tsr_hr_path = true;  // temporal SR on HR features inside the ST subnet
  bool tsr_lr_path = true;  // temporal SR on LR features inside the ST subnet

  bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
  int scale = 4;
  double n = 0.5;  // temporal position of the synthesized frame; fixed
  int c_h = 64;
  int c_l = 128;
  int s_residual_blocks = 2;
  int st_residual_blocks = 5;
  int fb_residual_blocks = 5;
  int m_residual_blocks = 2;
  std::array<int, 3> flow_channels{32, 64, 128};
  bool flow_head_zero_init = true;
  AblationFlags ablation;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    STARNET_EXPECT(scale == 2 || scale == 4 || scale == 8, "ModelConfig: scale must be 2, 4 or 8");
    STARNET_EXPECT(n > 0 && n < 1, "ModelConfig: n must lie in (0,1)");
    STARNET_EXPECT(c_h > 0 && c_l > 0, "ModelConfig: channel widths must be positive");
    STARNET_EXPECT(s_residual_blocks >= 0 && st_residual_blocks >= 0 && fb_residual_blocks >= 0 && m_residual_blocks >= 0,
                   "ModelConfig: residual block counts must be non-negative");
    STARNET_EXPECT(!ablation.use_flow_refinement || ablation.use_flow_input,
                   "ModelConfig: flow refinement requires flow input");
  }

  // Up/down projection kernel: (scale + 4) wide, stride = scale, padding 2.
  int projection_kernel() const { return scale + 4; }
};

// The eight weight groups, in a fixed order.
inline constexpr std::array<const char*, 8> kThetaGroups = {"theta_s", "theta_d",  "theta_m",   "theta_st",
                                                            "theta_f", "theta_b",  "theta_rec", "theta_flow"};

template <typename T>
struct StarnetParams {
  ParameterCollection<T> theta_s{"net_s"};
  ParameterCollection<T> theta_d{"net_d"};
  ParameterCollection<T> theta_m{"net_m"};
  ParameterCollection<T> theta_st{"net_st"};
  ParameterCollection<T> theta_f{"net_f"};
  ParameterCollection<T> theta_b{"net_b"};
  ParameterCollection<T> theta_rec{"net_rec"};
  ParameterCollection<T> theta_flow{"net_flow"};

  std::array<ParameterCollection<T>*, 8> groups() {
    return {&theta_s, &theta_d, &theta_m, &theta_st, &theta_f, &theta_b, &theta_rec, &theta_flow};
  }
  std::array<const ParameterCollection<T>*, 8> groups() const {
    return {&theta_s, &theta_d, &theta_m, &theta_st, &theta_f, &theta_b, &theta_rec, &theta_flow};
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for (auto* g : groups()) n += g->numel();
    return n;
  }
  std::size_t tensor_count() const {
    std::size_t n = 0;
    for (auto* g : groups()) n += g->size();
    return n;
  }
  void zero_grad() {
    for (auto* g : groups()) g->zero_grad();
  }

  const Parameter<T>* find(const std::string& name) const {
    for (auto* g : groups())
      if (auto* p = g->find(name)) return p;
    return nullptr;
  }
};

// Spatial SR of one frame from itself, its neighbour and the flow from the
// neighbour back to it.
template <typename T>
struct NetS {
  Conv<T> in;
  PReLU<T> in_act;
  std::vector<ResidualBlock<T>> trunk;
  Conv<T> up;
  PReLU<T> up_act;

  BasicTensor<T> operator()(const BasicTensor<T>& frame, const BasicTensor<T>& neighbour,
                            const BasicTensor<T>& flow_to_frame) const {
    STARNET_EXPECT(frame.shape() == neighbour.shape(), "Net_S: frame sizes differ");
    STARNET_EXPECT(flow_to_frame.dim(2) == frame.dim(2) && flow_to_frame.dim(3) == frame.dim(3),
                   "Net_S: flow does not match the frame grid");
    auto x = in_act(in(concat_channels<T>({frame, neighbour, flow_to_frame})));
    return up_act(up(run_stack(trunk, x)));
  }
};

// Strided down-projection, HR features to LR features.
template <typename T>
struct NetD {
  Conv<T> down;
  PReLU<T> act;
  int scale = 4;

  BasicTensor<T> operator()(const BasicTensor<T>& hr) const {
    STARNET_EXPECT(hr.rank() == 4 && hr.dim(2) % scale == 0 && hr.dim(3) % scale == 0,
                   "Net_D: HR feature size must be divisible by the scale");
    return act(down(hr));
  }
};

template <typename T>
struct NetM {
  Conv<T> in;
  PReLU<T> in_act;
  std::vector<ResidualBlock<T>> trunk;

  BasicTensor<T> operator()(const BasicTensor<T>& fwd, const BasicTensor<T>& bwd) const {
    STARNET_EXPECT(fwd.shape() == bwd.shape(), "Net_M: flow sizes differ");
    return run_stack(trunk, in_act(in(concat_channels<T>({fwd, bwd}))));
  }
};

template <typename T>
struct NetST {
  Conv<T> lr_in;
  PReLU<T> lr_in_act;
  std::vector<ResidualBlock<T>> trunk;
  Conv<T> lr_out;     // present iff tsr_lr_path
  Conv<T> up;         // LR trunk -> HR features (always)
  PReLU<T> up_act;
  Conv<T> hr_in;      // present iff tsr_hr_path
  PReLU<T> hr_in_act;
  bool tsr_lr = true;
  bool tsr_hr = true;

  struct Result {
    BasicTensor<T> H_tn;
    BasicTensor<T> L_tn;
  };

  Result operator()(const BasicTensor<T>& H_t, const BasicTensor<T>& H_t1, const BasicTensor<T>& L_t,
                    const BasicTensor<T>& L_t1, const BasicTensor<T>& M) const {
    auto trunk_out = run_stack(trunk, lr_in_act(lr_in(concat_channels<T>({L_t, L_t1, M}))));
    Result r;
    r.L_tn = tsr_lr ? lr_out(trunk_out) : BasicTensor<T>::zeros(L_t.shape());
    r.H_tn = up_act(up(trunk_out));
    if (tsr_hr) r.H_tn = add(r.H_tn, hr_in_act(hr_in(concat_channels<T>({H_t, H_t1}))));
    return r;
  }
};

// Net_F / Net_B: projects (anchor LR, in-between LR, motion) to HR features.
template <typename T>
struct NetProj {
  Conv<T> in;
  PReLU<T> in_act;
  std::vector<ResidualBlock<T>> trunk;
  Conv<T> up;
  PReLU<T> up_act;

  BasicTensor<T> operator()(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& M) const {
    auto x = in_act(in(concat_channels<T>({a, b, M})));
    return up_act(up(run_stack(trunk, x)));
  }
};

template <typename T>
struct NetRec {
  Conv<T> hr;  // shared by the three HR outputs
  Conv<T> lr;
};

// U-Net predicting a residual correction of a flow field from the flow and
// the two frames it relates.
template <typename T>
struct FlowUNet {
  Conv<T> enc1a, enc1b, down1, enc2, down2, enc3, up2, dec2, up1, dec1, head;
  PReLU<T> a_enc1a, a_enc1b, a_down1, a_enc2, a_down2, a_enc3, a_up2, a_dec2, a_up1, a_dec1;

  BasicTensor<T> operator()(const BasicTensor<T>& flow, const BasicTensor<T>& img_a, const BasicTensor<T>& img_b) const {
    STARNET_EXPECT(flow.dim(2) == img_a.dim(2) && flow.dim(3) == img_a.dim(3) && img_a.shape() == img_b.shape(),
                   "Net_flow: flow and frames must share the grid");
    const int h = flow.dim(2), w = flow.dim(3);
    const int ph = (4 - h % 4) % 4, pw = (4 - w % 4) % 4;
    auto x = pad_reflect(concat_channels<T>({flow, img_a, img_b}), ph, pw);
    auto e1 = a_enc1b(enc1b(a_enc1a(enc1a(x))));
    auto e2 = a_enc2(enc2(a_down1(down1(e1))));
    auto e3 = a_enc3(enc3(a_down2(down2(e2))));
    auto d2 = a_dec2(dec2(concat_channels<T>({a_up2(up2(e3)), e2})));
    auto d1 = a_dec1(dec1(concat_channels<T>({a_up1(up1(d2)), e1})));
    return add(flow, crop(head(d1), h, w));
  }
};

template <typename T>
struct ForwardInputs {
  BasicTensor<T> I_t;   // N x 3 x h x w
  BasicTensor<T> I_t1;
  BasicTensor<T> F_fwd;  // N x 2 x h x w, t -> t+1; may be undefined without flow input
  BasicTensor<T> F_bwd;  // t+1 -> t
};

template <typename T>
struct Stage1Outputs {
  BasicTensor<T> H_t, H_t1, L_t, L_t1, M, H_tn, L_tn;
};

template <typename T>
struct Stage2Outputs {
  BasicTensor<T> H_t_b, L_t_b, H_t1_f, L_t1_f, H_tn_f, L_tn_f, H_tn_b, L_tn_b;
  BasicTensor<T> H_t, L_t, H_t1, L_t1, H_tn, L_tn;  // refined
};

template <typename T>
struct StageOutputs {
  BasicTensor<T> F_fwd, F_bwd;  // flows fed to stage 1 (refined if FR is on)
  bool flow_refined = false;
  Stage1Outputs<T> stage1;
  Stage2Outputs<T> stage2;      // empty without stage 2
  BasicTensor<T> H_t, H_tn, H_t1, L_tn;  // features handed to reconstruction
  BasicTensor<T> I_sr_t, I_sr_tn, I_sr_t1, I_l_tn;
};

// x + ReLU(x - y)
template <typename T>
BasicTensor<T> residual_update(const BasicTensor<T>& x, const BasicTensor<T>& y) {
  return add(x, relu(sub(x, y)));
}

// x + ReLU(x - y) + ReLU(x - z)
template <typename T>
BasicTensor<T> residual_update2(const BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& z) {
  return add(residual_update(x, y), relu(sub(x, z)));
}

template <typename T = float>
class Starnet {
 public:
  explicit Starnet(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    const int k = cfg_.projection_kernel(), s = cfg_.scale, ch = cfg_.c_h, cl = cfg_.c_l;
    const auto& ab = cfg_.ablation;
    if (ab.use_flow_refinement) {
      LayerFactory<T> f(params_.theta_flow, rng);
      const auto [c1, c2, c3] = cfg_.flow_channels;
      auto& u = flow_;
      u.enc1a = f.conv("enc1a", 8, c1, 3), u.a_enc1a = f.prelu("enc1a_act");
      u.enc1b = f.conv("enc1b", c1, c1, 3), u.a_enc1b = f.prelu("enc1b_act");
      u.down1 = f.conv("down1", c1, c2, 4, 2, 1), u.a_down1 = f.prelu("down1_act");
      u.enc2 = f.conv("enc2", c2, c2, 3), u.a_enc2 = f.prelu("enc2_act");
      u.down2 = f.conv("down2", c2, c3, 4, 2, 1), u.a_down2 = f.prelu("down2_act");
      u.enc3 = f.conv("enc3", c3, c3, 3), u.a_enc3 = f.prelu("enc3_act");
      u.up2 = f.deconv("up2", c3, c2, 4, 2, 1), u.a_up2 = f.prelu("up2_act");
      u.dec2 = f.conv("dec2", 2 * c2, c2, 3), u.a_dec2 = f.prelu("dec2_act");
      u.up1 = f.deconv("up1", c2, c1, 4, 2, 1), u.a_up1 = f.prelu("up1_act");
      u.dec1 = f.conv("dec1", 2 * c1, c1, 3), u.a_dec1 = f.prelu("dec1_act");
      u.head = f.conv("head", c1, 2, 3, 1, 1, cfg_.flow_head_zero_init ? 0.0 : 0.1);
    }
    {
      LayerFactory<T> f(params_.theta_s, rng);
      net_s_.in = f.conv("in", 8, cl, 3), net_s_.in_act = f.prelu("in_act");
      net_s_.trunk = f.residual_stack("trunk", cl, cfg_.s_residual_blocks);
      net_s_.up = f.deconv("up", cl, ch, k, s, 2), net_s_.up_act = f.prelu("up_act");
    }
    {
      LayerFactory<T> f(params_.theta_d, rng);
      net_d_.down = f.conv("down", ch, cl, k, s, 2), net_d_.act = f.prelu("act");
      net_d_.scale = s;
    }
    if (ab.use_flow_input) {
      LayerFactory<T> f(params_.theta_m, rng);
      net_m_.in = f.conv("in", 4, cl, 3), net_m_.in_act = f.prelu("in_act");
      net_m_.trunk = f.residual_stack("trunk", cl, cfg_.m_residual_blocks);
    }
    {
      LayerFactory<T> f(params_.theta_st, rng);
      net_st_.lr_in = f.conv("lr_in", 3 * cl, cl, 3), net_st_.lr_in_act = f.prelu("lr_in_act");
      net_st_.trunk = f.residual_stack("trunk", cl, cfg_.st_residual_blocks);
      if (ab.tsr_lr_path) net_st_.lr_out = f.conv("lr_out", cl, cl, 3);
      net_st_.up = f.deconv("up", cl, ch, k, s, 2), net_st_.up_act = f.prelu("up_act");
      if (ab.tsr_hr_path) net_st_.hr_in = f.conv("hr_in", 2 * ch, ch, 3), net_st_.hr_in_act = f.prelu("hr_in_act");
      net_st_.tsr_lr = ab.tsr_lr_path;
      net_st_.tsr_hr = ab.tsr_hr_path;
    }
    if (ab.use_stage2) {
      for (auto [proj, group] : {std::pair{&net_f_, &params_.theta_f}, std::pair{&net_b_, &params_.theta_b}}) {
        LayerFactory<T> f(*group, rng);
        proj->in = f.conv("in", 3 * cl, cl, 3), proj->in_act = f.prelu("in_act");
        proj->trunk = f.residual_stack("trunk", cl, cfg_.fb_residual_blocks);
        proj->up = f.deconv("up", cl, ch, k, s, 2), proj->up_act = f.prelu("up_act");
      }
    }
    {
      LayerFactory<T> f(params_.theta_rec, rng);
      net_rec_.hr = f.conv("hr", ch, 3, 3);
      net_rec_.lr = f.conv("lr", cl, 3, 3);
    }
  }

  Starnet(const Starnet&) = delete;
  Starnet& operator=(const Starnet&) = delete;
  Starnet(Starnet&&) noexcept = default;
  Starnet& operator=(Starnet&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  StarnetParams<T>& params() { return params_; }
  const StarnetParams<T>& params() const { return params_; }

  const NetS<T>& net_s() const { return net_s_; }
  const NetD<T>& net_d() const { return net_d_; }
  const NetM<T>& net_m() const { return net_m_; }
  const NetST<T>& net_st() const { return net_st_; }
  const NetProj<T>& net_f() const { return net_f_; }
  const NetProj<T>& net_b() const { return net_b_; }
  const NetRec<T>& net_rec() const { return net_rec_; }
  const FlowUNet<T>& net_flow() const { return flow_; }

  BasicTensor<T> refine_flow(const BasicTensor<T>& flow, const BasicTensor<T>& img_a, const BasicTensor<T>& img_b) const {
    STARNET_EXPECT(cfg_.ablation.use_flow_refinement, "refine_flow: flow refinement is disabled in this model");
    return flow_(flow, img_a, img_b);
  }

  Stage1Outputs<T> stage1(const BasicTensor<T>& I_t, const BasicTensor<T>& I_t1, const BasicTensor<T>& F_fwd,
                          const BasicTensor<T>& F_bwd) const {
    Stage1Outputs<T> s;
    s.H_t = net_s_(I_t, I_t1, F_bwd);
    s.H_t1 = net_s_(I_t1, I_t, F_fwd);
    s.L_t = net_d_(s.H_t);
    s.L_t1 = net_d_(s.H_t1);
    s.M = cfg_.ablation.use_flow_input ? net_m_(F_fwd, F_bwd) : BasicTensor<T>::zeros(s.L_t.shape());
    auto st = net_st_(s.H_t, s.H_t1, s.L_t, s.L_t1, s.M);
    s.H_tn = st.H_tn;
    s.L_tn = st.L_tn;
    return s;
  }

  Stage2Outputs<T> stage2(const Stage1Outputs<T>& s1) const {
    STARNET_EXPECT(cfg_.ablation.use_stage2, "stage2: refinement stage is disabled in this model");
    Stage2Outputs<T> s;
    s.H_t_b = net_b_(s1.L_tn, s1.L_t, s1.M);
    s.L_t_b = net_d_(s.H_t_b);
    s.H_t = residual_update(s1.H_t, s.H_t_b);
    s.L_t = residual_update(s1.L_t, s.L_t_b);

    s.H_t1_f = net_f_(s1.L_tn, s1.L_t1, s1.M);
    s.L_t1_f = net_d_(s.H_t1_f);
    s.H_t1 = residual_update(s1.H_t1, s.H_t1_f);
    s.L_t1 = residual_update(s1.L_t1, s.L_t1_f);

    // The in-between features look through the already refined anchors.
    s.H_tn_f = net_f_(s.L_t, s1.L_tn, s1.M);
    s.L_tn_f = net_d_(s.H_tn_f);
    s.H_tn_b = net_b_(s.L_t1, s1.L_tn, s1.M);
    s.L_tn_b = net_d_(s.H_tn_b);
    s.H_tn = residual_update2(s1.H_tn, s.H_tn_f, s.H_tn_b);
    s.L_tn = residual_update2(s1.L_tn, s.L_tn_f, s.L_tn_b);
    return s;
  }

  // Raw (unclamped) reconstructions; outputs written into `out`.
  void reconstruct(StageOutputs<T>& out) const {
    out.I_sr_t = net_rec_.hr(out.H_t);
    out.I_sr_tn = net_rec_.hr(out.H_tn);
    out.I_sr_t1 = net_rec_.hr(out.H_t1);
    out.I_l_tn = net_rec_.lr(out.L_tn);
  }

  StageOutputs<T> forward(const ForwardInputs<T>& in) const {
    STARNET_EXPECT(in.I_t.defined() && in.I_t1.defined() && in.I_t.shape() == in.I_t1.shape() && in.I_t.rank() == 4 &&
                       in.I_t.dim(1) == 3,
                   "forward: I_t and I_t1 must be matching N x 3 x h x w tensors");
    const int n = in.I_t.dim(0), h = in.I_t.dim(2), w = in.I_t.dim(3);
    StageOutputs<T> out;
    if (cfg_.ablation.use_flow_input) {
      STARNET_EXPECT(in.F_fwd.defined() && in.F_bwd.defined(), "forward: this model consumes bidirectional flows");
      STARNET_EXPECT(in.F_fwd.shape() == Shape({n, 2, h, w}) && in.F_bwd.shape() == in.F_fwd.shape(),
                     "forward: flows must be N x 2 x h x w on the input grid");
      if (cfg_.ablation.use_flow_refinement) {
        out.F_fwd = flow_(in.F_fwd, in.I_t, in.I_t1);
        out.F_bwd = flow_(in.F_bwd, in.I_t1, in.I_t);
        out.flow_refined = true;
      } else {
        out.F_fwd = in.F_fwd;
        out.F_bwd = in.F_bwd;
      }
    } else {
      // Net_S keeps its 8-channel input; the flow slots carry zeros.
      out.F_fwd = BasicTensor<T>::zeros({n, 2, h, w});
      out.F_bwd = BasicTensor<T>::zeros({n, 2, h, w});
    }
    out.stage1 = stage1(in.I_t, in.I_t1, out.F_fwd, out.F_bwd);
    if (cfg_.ablation.use_stage2) {
      out.stage2 = stage2(out.stage1);
      out.H_t = out.stage2.H_t;
      out.H_tn = out.stage2.H_tn;
      out.H_t1 = out.stage2.H_t1;
      out.L_tn = out.stage2.L_tn;
    } else {
      out.H_t = out.stage1.H_t;
      out.H_tn = out.stage1.H_tn;
      out.H_t1 = out.stage1.H_t1;
      out.L_tn = out.stage1.L_tn;
    }
    reconstruct(out);
    return out;
  }

 private:
  ModelConfig cfg_;
  StarnetParams<T> params_;
  FlowUNet<T> flow_;
  NetS<T> net_s_;
  NetD<T> net_d_;
  NetM<T> net_m_;
  NetST<T> net_st_;
  NetProj<T> net_f_;
  NetProj<T> net_b_;
  NetRec<T> net_rec_;
};

}  // namespace starnet
