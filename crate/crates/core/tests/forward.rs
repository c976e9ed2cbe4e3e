use fxlstm_core::activation::{ActivationUnit, PiecewisePoly, SIGMOID, TANH};
use fxlstm_core::fxp::{quantize, ACT_FORMAT, INPUT_FORMAT};
use fxlstm_core::net::{
    classify, gen_fixture_model, random_window, Dims, ExecMode, GaitWindow, Gate, GateParams, Intermediates, Label,
    ModelParams, Neuron, OverflowStats, QuantizedModel, QuantizedNet,
};
use fxlstm_core::{BitWidthConfig, FxpFormat, FxpValue, RoundingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [RoundingMode; 2] = [RoundingMode::NearestTiesAway, RoundingMode::PaperEpsilon];

/// Round `num / 2^den` into `fmt` by integer division (floor of the scaled
/// magnitude, then +0.5-and-truncate or +1), restore the sign and clamp.
fn oracle_round(num: i128, den: u32, fmt: FxpFormat, mode: RoundingMode) -> i64 {
    if num == 0 {
        return 0;
    }
    let f = fmt.frac_bits();
    let mag = num.unsigned_abs();
    let (q, round_up) = if f >= den {
        (mag * (1u128 << (f - den)), false)
    } else {
        let d = 1u128 << (den - f);
        (mag / d, 2 * (mag % d) >= d)
    };
    let q = match mode {
        RoundingMode::NearestTiesAway => q + round_up as u128,
        RoundingMode::PaperEpsilon => q + 1,
    };
    let signed = if num < 0 { -(q.min(1 << 80) as i128) } else { q.min(1 << 80) as i128 };
    signed.clamp(fmt.min_raw() as i128, fmt.max_raw() as i128) as i64
}

fn oracle_mul(a: FxpValue, b: FxpValue, out: FxpFormat, mode: RoundingMode) -> i64 {
    oracle_round(
        a.raw() as i128 * b.raw() as i128,
        a.format().frac_bits() + b.format().frac_bits(),
        out,
        mode,
    )
}

/// Exact sum of rounded products and one bias, then a single rounding.
fn oracle_dot(terms: &[(FxpValue, FxpValue)], bias: FxpValue, out: FxpFormat, mode: RoundingMode) -> i64 {
    let (of, bf) = (out.frac_bits(), bias.format().frac_bits());
    let mut num: i128 = terms
        .iter()
        .map(|&(w, x)| oracle_mul(w, x, out, mode) as i128 * (1i128 << bf))
        .sum();
    num += bias.raw() as i128 * (1i128 << of);
    oracle_round(num, of + bf, out, mode)
}

fn raw(v: i64, fmt: FxpFormat) -> FxpValue {
    FxpValue::from_raw(v, fmt).unwrap()
}

fn real(x: f64, fmt: FxpFormat) -> FxpValue {
    quantize(x, fmt, RoundingMode::NearestTiesAway).unwrap().value
}

/// Uniform raw value with a random magnitude scale so both the saturating
/// and the fine-grained regimes are exercised.
fn rand_value(rng: &mut ChaCha8Rng, fmt: FxpFormat) -> FxpValue {
    let shift = rng.gen_range(0..fmt.total_bits());
    let hi = fmt.max_raw() >> shift;
    let lo = fmt.min_raw() >> shift;
    raw(rng.gen_range(lo..=hi), fmt)
}

fn rand_config(rng: &mut ChaCha8Rng) -> BitWidthConfig {
    let wide = BitWidthConfig::wide();
    let mut cfgs: Vec<BitWidthConfig> = BitWidthConfig::presets().collect();
    cfgs.push(wide);
    cfgs[rng.gen_range(0..cfgs.len())].with_rounding(MODES[rng.gen_range(0..2)])
}

fn zero_model(fmt: FxpFormat, dims: Dims) -> QuantizedModel {
    ModelParams::zeros(dims).quantize(fmt, RoundingMode::NearestTiesAway).unwrap().0
}

fn default_cfg() -> BitWidthConfig {
    BitWidthConfig::preset(1).unwrap()
}

#[test]
fn gate_preact_bias_only() {
    let cfg = default_cfg();
    let model = zero_model(cfg.param_fmt, Dims::default());
    let net = QuantizedNet::new(&model, cfg).unwrap();
    let mut gate = model.cells[0][0].clone();
    gate.b = real(0.25, cfg.param_fmt);
    let x = vec![real(1.0, INPUT_FORMAT); 4];
    let h = vec![real(1.0, cfg.op_fmt); 20];
    let mut ov = OverflowStats::default();
    let pre = net.gate_preact(&x, &h, &gate, &mut ov).unwrap();
    assert_eq!(pre.to_real(), 0.25);
}

#[test]
fn gate_preact_single_product() {
    let cfg = default_cfg();
    let model = zero_model(cfg.param_fmt, Dims::default());
    let net = QuantizedNet::new(&model, cfg).unwrap();
    let mut gate = model.cells[0][0].clone();
    gate.w[0] = real(1.0, cfg.param_fmt);
    let mut x = vec![FxpValue::zero(INPUT_FORMAT); 4];
    x[0] = real(0.5, INPUT_FORMAT);
    let h = vec![FxpValue::zero(cfg.op_fmt); 20];
    let pre = net.gate_preact(&x, &h, &gate, &mut OverflowStats::default()).unwrap();
    assert_eq!(pre.to_real(), 0.5);
}

#[test]
fn gate_preact_rejects_size_mismatch() {
    let cfg = default_cfg();
    let model = zero_model(cfg.param_fmt, Dims::default());
    let net = QuantizedNet::new(&model, cfg).unwrap();
    let gate = &model.cells[0][0];
    let h = vec![FxpValue::zero(cfg.op_fmt); 19];
    let x = vec![FxpValue::zero(INPUT_FORMAT); 4];
    assert!(net.gate_preact(&x, &h, gate, &mut OverflowStats::default()).is_err());
}

#[test]
fn gate_preact_matches_integer_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a7e);
    for _ in 0..10_000 {
        let cfg = rand_config(&mut rng);
        let (pf, of) = (cfg.param_fmt, cfg.op_fmt);
        let model = zero_model(pf, Dims::default());
        let net = QuantizedNet::new(&model, cfg).unwrap();
        let gate = GateParams {
            u: (0..20).map(|_| rand_value(&mut rng, pf)).collect(),
            w: (0..4).map(|_| rand_value(&mut rng, pf)).collect(),
            b: rand_value(&mut rng, pf),
        };
        let h: Vec<FxpValue> = (0..20).map(|_| rand_value(&mut rng, of)).collect();
        let x: Vec<FxpValue> = (0..4).map(|_| rand_value(&mut rng, INPUT_FORMAT)).collect();
        let terms: Vec<(FxpValue, FxpValue)> = gate
            .u
            .iter()
            .copied()
            .zip(h.iter().copied())
            .chain(gate.w.iter().copied().zip(x.iter().copied()))
            .collect();
        let expect = oracle_dot(&terms, gate.b, of, cfg.rounding);
        let got = net.gate_preact(&x, &h, &gate, &mut OverflowStats::default()).unwrap();
        assert_eq!(got.raw() as i64, expect, "{cfg}");
        assert_eq!(got.format(), of);
    }
}

#[test]
fn fc_forward_matches_integer_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfc);
    let neuron = |rng: &mut ChaCha8Rng, fmt| Neuron {
        w: (0..20).map(|_| rand_value(rng, fmt)).collect(),
        b: rand_value(rng, fmt),
    };
    for _ in 0..10_000 {
        let cfg = rand_config(&mut rng);
        let (pf, of, mode) = (cfg.param_fmt, cfg.op_fmt, cfg.rounding);
        let mut model = zero_model(pf, Dims::default());
        model.fc1 = (0..20).map(|_| neuron(&mut rng, pf)).collect();
        model.fc2 = (0..2).map(|_| neuron(&mut rng, pf)).collect();
        let input: Vec<FxpValue> = (0..20).map(|_| rand_value(&mut rng, of)).collect();
        let hidden: Vec<FxpValue> = model
            .fc1
            .iter()
            .map(|n| {
                let terms: Vec<_> = n.w.iter().copied().zip(input.iter().copied()).collect();
                raw(oracle_dot(&terms, n.b, of, mode).max(0), of)
            })
            .collect();
        let expect: Vec<i64> = model
            .fc2
            .iter()
            .map(|n| {
                let terms: Vec<_> = n.w.iter().copied().zip(hidden.iter().copied()).collect();
                oracle_dot(&terms, n.b, of, mode)
            })
            .collect();
        let net = QuantizedNet::new(&model, cfg).unwrap();
        let got = net.fc_forward(&input, &mut OverflowStats::default(), &mut ()).unwrap();
        assert_eq!([got[0].raw() as i64, got[1].raw() as i64], [expect[0], expect[1]], "{cfg}");
    }
}

/// Quantized `value(0)` of a piecewise activation as the activation unit
/// produces it: the constant term rounded into FxP(18,13), then into `out`.
fn act_at_zero(poly: PiecewisePoly, out: FxpFormat, mode: RoundingMode) -> FxpValue {
    let seg = poly.segments[poly.segment_index(0.0)];
    let a0 = quantize(seg.a0, ACT_FORMAT, mode).unwrap().value;
    raw(oracle_round(a0.raw() as i128, ACT_FORMAT.frac_bits(), out, mode), out)
}

#[test]
fn zero_cell_composes_activation_constants() {
    for mode in MODES {
        let cfg = default_cfg().with_rounding(mode);
        let op = cfg.op_fmt;
        let model = zero_model(cfg.param_fmt, Dims::default());
        let net = QuantizedNet::new(&model, cfg).unwrap();
        let x = vec![FxpValue::zero(INPUT_FORMAT); 4];
        let h = vec![FxpValue::zero(op); 20];
        let mut probe = Intermediates::new(Dims::default());
        let (c, hn) = net
            .cell_step(0, 0, &x, FxpValue::zero(op), &h, &mut OverflowStats::default(), &mut probe)
            .unwrap();
        let s = act_at_zero(SIGMOID, op, mode);
        let t = act_at_zero(TANH, op, mode);
        assert_eq!(probe.gate_act[..4], [s.to_real(), s.to_real(), t.to_real(), s.to_real()]);
        // f * 0 is exactly zero; the sum is requantized once more.
        let expect_c = oracle_round(oracle_mul(s, t, op, mode) as i128, op.frac_bits(), op, mode);
        assert_eq!(c.raw() as i64, expect_c);
        let tanh_c = ActivationUnit::new(mode).tanh(c, op, &mut 0);
        assert_eq!(hn.raw() as i64, oracle_mul(s, tanh_c, op, mode));
    }
    // 0.50195 and 0.00314 are the printed values at zero.
    let s = act_at_zero(SIGMOID, ACT_FORMAT, RoundingMode::NearestTiesAway);
    assert!((s.to_real() - 0.50195).abs() < ACT_FORMAT.ulp());
    let t = act_at_zero(TANH, ACT_FORMAT, RoundingMode::NearestTiesAway);
    assert!((t.to_real() - 0.00314).abs() < ACT_FORMAT.ulp());
}

#[test]
fn saturated_gates_carry_cell_state() {
    let cfg = default_cfg();
    let (pf, op) = (cfg.param_fmt, cfg.op_fmt);
    let mut model = zero_model(pf, Dims::default());
    let big = real(pf.max(), pf);
    let neg = real(pf.min(), pf);
    model.cells[0][Gate::F.index()].w = vec![big; 4];
    model.cells[0][Gate::F.index()].b = big;
    model.cells[0][Gate::I.index()].w = vec![neg; 4];
    model.cells[0][Gate::I.index()].b = neg;
    let net = QuantizedNet::new(&model, cfg).unwrap();
    let x = vec![real(INPUT_FORMAT.max(), INPUT_FORMAT); 4];
    let h = vec![FxpValue::zero(op); 20];
    let mut probe = Intermediates::new(Dims::default());
    let (c, _) = net
        .cell_step(0, 0, &x, real(0.5, op), &h, &mut OverflowStats::default(), &mut probe)
        .unwrap();
    assert!(probe.gate_preact[Gate::F.index()] > 6.0);
    assert!(probe.gate_preact[Gate::I.index()] < -6.0);
    assert_eq!(probe.gate_act[Gate::F.index()], 1.0);
    assert_eq!(probe.gate_act[Gate::I.index()], 0.0);
    assert_eq!(c.to_real(), 0.5);
}

#[test]
fn single_timestep_is_one_cell_step_per_cell() {
    let dims = Dims {
        timesteps: 1,
        ..Dims::default()
    };
    let mut params = gen_fixture_model(8);
    params.dims = dims;
    let cfg = default_cfg();
    let (q, _) = params.quantize(cfg.param_fmt, cfg.rounding).unwrap();
    let net = QuantizedNet::new(&q, cfg).unwrap();
    let w = random_window(8, dims).unwrap();
    let state = net.layer_forward(&w, &mut OverflowStats::default(), &mut ()).unwrap();
    let zero = FxpValue::zero(cfg.op_fmt);
    let h0 = vec![zero; 20];
    for n in 0..20 {
        let (c, h) = net
            .cell_step(0, n, w.sample(0), zero, &h0, &mut OverflowStats::default(), &mut ())
            .unwrap();
        assert_eq!((state.c[n], state.h[n]), (c, h));
    }
}

#[test]
fn zero_network_follows_hand_iteration() {
    for mode in MODES {
        let cfg = default_cfg().with_rounding(mode);
        let op = cfg.op_fmt;
        let model = zero_model(cfg.param_fmt, Dims::default());
        let net = QuantizedNet::new(&model, cfg).unwrap();
        let w = GaitWindow::from_reals(&[0.0; 96 * 4], 4, Label::Normal, 0, mode).unwrap();
        let state = net.layer_forward(&w, &mut OverflowStats::default(), &mut ()).unwrap();
        // Every pre-activation stays zero, so each step is c <- s*c + s*t.
        let s = act_at_zero(SIGMOID, op, mode);
        let t = act_at_zero(TANH, op, mode);
        let ig = oracle_mul(s, t, op, mode) as i128;
        let mut c = FxpValue::zero(op);
        for _ in 0..96 {
            let fc = oracle_mul(s, c, op, mode) as i128;
            c = raw(oracle_round(fc + ig, op.frac_bits(), op, mode), op);
        }
        assert!(state.c.iter().all(|&v| v == c), "{mode}");
    }
}

#[test]
fn identity_fc1_passes_nonnegative_inputs() {
    let cfg = default_cfg();
    let (pf, op) = (cfg.param_fmt, cfg.op_fmt);
    let mut model = zero_model(pf, Dims::default());
    for (j, n) in model.fc1.iter_mut().enumerate() {
        n.w[j] = real(1.0, pf);
    }
    let input: Vec<FxpValue> = (0..20).map(|k| real(k as f64 * 0.37, op)).collect();
    let net = QuantizedNet::new(&model, cfg).unwrap();
    let mut probe = Intermediates::new(Dims::default());
    net.fc_forward(&input, &mut OverflowStats::default(), &mut probe).unwrap();
    let expect: Vec<f64> = input.iter().map(|v| v.to_real()).collect();
    assert_eq!(probe.fc1_out, expect);
}

#[test]
fn fc2_biases_reach_the_logits() {
    let cfg = default_cfg();
    let mut model = zero_model(cfg.param_fmt, Dims::default());
    model.fc2[0].b = real(0.1, cfg.param_fmt);
    model.fc2[1].b = real(-0.1, cfg.param_fmt);
    let net = QuantizedNet::new(&model, cfg).unwrap();
    let input = vec![real(1.0, cfg.op_fmt); 20];
    let logits = net.fc_forward(&input, &mut OverflowStats::default(), &mut ()).unwrap();
    assert_eq!(logits[0], model.fc2[0].b.widen(cfg.op_fmt).unwrap());
    assert_eq!(logits[1], model.fc2[1].b.widen(cfg.op_fmt).unwrap());
    assert!((logits[0].to_real() - 0.1).abs() <= cfg.param_fmt.ulp() / 2.0);
    assert!((logits[1].to_real() + 0.1).abs() <= cfg.param_fmt.ulp() / 2.0);
}

#[test]
fn argmax_tie_break() {
    use fxlstm_core::net::argmax;
    assert_eq!(argmax([0.5, 0.2]), Label::Normal);
    assert_eq!(argmax([0.2, 0.5]), Label::Abnormal);
    assert_eq!(argmax([0.3, 0.3]), Label::Normal);
}

#[test]
fn disabled_cells_do_not_change_logits() {
    let small = Dims {
        num_cells: 10,
        ..Dims::default()
    };
    for seed in 0..8 {
        let params = fxlstm_core::net::FixtureSpec {
            dims: small,
            ..Default::default()
        }
        .generate(seed);
        let padded = params.pad_cells(20, 0.0);
        let w = random_window(seed + 100, small).unwrap();
        for cfg in BitWidthConfig::presets() {
            for mode in MODES {
                let cfg = cfg.with_rounding(mode);
                let a = classify(&w, &params, &cfg, ExecMode::Quantized).unwrap();
                let b = classify(&w, &padded, &cfg, ExecMode::Quantized).unwrap();
                assert_eq!(a.logits, b.logits, "{cfg} {mode}");
            }
            let a = classify(&w, &params, &cfg, ExecMode::FullPrecision).unwrap();
            let b = classify(&w, &padded, &cfg, ExecMode::FullPrecision).unwrap();
            assert_eq!(a.logits, b.logits);
        }
    }
}

#[test]
fn quantized_inference_is_reproducible() {
    let cfg = BitWidthConfig::preset(7).unwrap();
    let params = gen_fixture_model(42);
    let w = random_window(42, Dims::default()).unwrap();
    let a = classify(&w, &params, &cfg, ExecMode::Quantized).unwrap();
    let b = classify(&w, &params, &cfg, ExecMode::Quantized).unwrap();
    assert_eq!(a, b);
    assert_eq!(gen_fixture_model(42), params);
}

#[test]
fn window_shape_is_checked() {
    let cfg = default_cfg();
    let model = zero_model(cfg.param_fmt, Dims::default());
    let net = QuantizedNet::new(&model, cfg).unwrap();
    let short = GaitWindow::from_reals(&[0.0; 95 * 4], 4, Label::Normal, 0, cfg.rounding).unwrap();
    assert!(net.classify(&short).is_err());
}

#[test]
fn quantized_tracks_full_precision_on_fixture() {
    let params = gen_fixture_model(42);
    let cfg = default_cfg();
    let w = random_window(1, Dims::default()).unwrap();
    let fp = classify(&w, &params, &cfg, ExecMode::FullPrecision).unwrap();
    let q = classify(&w, &params, &cfg, ExecMode::Quantized).unwrap();
    for k in 0..2 {
        assert!((fp.logits[k] - q.logits[k]).abs() < 0.25, "{:?} vs {:?}", fp.logits, q.logits);
    }
}
