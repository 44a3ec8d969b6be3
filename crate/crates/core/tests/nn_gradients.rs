use liquidhike::nn::cnn::{CnnSpec, ConvSpec};
use liquidhike::nn::gradcheck::check_gradients;
use liquidhike::nn::model::{ModelConfig, PolicyModel, SeqBatch, Variant, WiringMode};
use liquidhike::nn::ncp::NcpWiring;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(variant: Variant, wiring: WiringMode, pool: bool) -> ModelConfig {
    let mut cfg = ModelConfig::desk(variant);
    cfg.cnn = CnnSpec {
        input: (3, 11, 14),
        layers: vec![ConvSpec { out_c: 4, k: 3, stride: 2 }, ConvSpec { out_c: 3, k: 3, stride: 1 }],
        pool: pool.then_some((2, 3)),
    };
    cfg.state_size = 7;
    cfg.backbone_units = 5;
    cfg.lstm_hidden = 6;
    cfg.wiring = wiring;
    cfg.ncp = NcpWiring {
        inter: 5,
        command: 4,
        motor: 4,
        sensory_fanout: 2,
        inter_fanout: 2,
        recurrent_command: 2,
        motor_fanin: 3,
        seed: 3,
    };
    cfg.init_seed = 11;
    cfg
}

fn batch(rows: usize, steps: usize, seed: u64) -> SeqBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rows * steps;
    SeqBatch {
        rows,
        steps,
        frames: (0..n).map(|_| (0..3 * 11 * 14).map(|_| rng.random::<f32>()).collect()).collect(),
        dts: (0..n).map(|_| rng.random_range(0.05..0.6)).collect(),
        labels: (0..4 * n).map(|_| rng.random_range(-0.8..0.8)).collect(),
    }
}

fn check(cfg: ModelConfig) {
    let mut model = PolicyModel::<f64>::new(&cfg).unwrap();
    // larger weights so ReLUs and gates sit away from trivial regimes
    for v in model.params.iter_mut() {
        *v *= 1.5;
    }
    let b = batch(2, 4, 5);
    let idx: Vec<usize> = (0..model.param_count()).collect();
    let rep = check_gradients(&model, &b, &idx, 1e-5, 1e-6).unwrap();
    assert!(rep.max_rel_err < 1e-4, "{:?} {:?}: {rep:?} at {:?}", cfg.variant, cfg.wiring, model.layout.specs.iter().find(|s| s.range().contains(&rep.worst_index)).map(|s| &s.name));
}

#[test]
fn cfc_dense_gradients() {
    check(tiny(Variant::Liquid, WiringMode::Dense, true));
}

#[test]
fn cfc_ncp_gradients() {
    check(tiny(Variant::Liquid, WiringMode::Ncp, false));
}

#[test]
fn lstm_gradients() {
    check(tiny(Variant::Lstm, WiringMode::Dense, true));
}

#[test]
fn lstm_dt_gradients() {
    check(tiny(Variant::LstmDt, WiringMode::Dense, false));
}

#[test]
fn ncp_masked_weights_stay_zero_in_gradient() {
    let cfg = tiny(Variant::Liquid, WiringMode::Ncp, false);
    let model = PolicyModel::<f64>::new(&cfg).unwrap();
    let mut g = vec![0.0; model.param_count()];
    model.loss_and_grad(&batch(2, 3, 1), &mut g).unwrap();
    for name in ["cfc.f.weight", "cfc.g.weight", "cfc.h.weight"] {
        let s = model.layout.get(name).unwrap();
        let zeros_p = model.params[s.range()].iter().filter(|v| **v == 0.0).count();
        let zeros_g = g[s.range()].iter().filter(|v| **v == 0.0).count();
        assert!(zeros_p > 0);
        assert!(zeros_g >= zeros_p);
        for (p, d) in model.params[s.range()].iter().zip(&g[s.range()]) {
            if *p == 0.0 {
                assert_eq!(*d, 0.0);
            }
        }
    }
}

#[test]
fn runner_matches_batched_forward() {
    for v in [Variant::Liquid, Variant::LstmDt] {
        let model = PolicyModel::<f64>::new(&tiny(v, WiringMode::Dense, true)).unwrap();
        let b = batch(1, 6, 2);
        let y = model.forward_batch(&b).unwrap();
        let mut r = model.runner();
        for t in 0..6 {
            let out = r.step(&b.frames[t], b.dts[t]).unwrap();
            for k in 0..4 {
                assert!((out[k] - y[t * 4 + k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn batch_rows_are_independent() {
    let model = PolicyModel::<f64>::new(&tiny(Variant::Liquid, WiringMode::Dense, true)).unwrap();
    let b = batch(3, 4, 8);
    let y = model.forward_batch(&b).unwrap();
    for r in 0..3 {
        let frames: Vec<Vec<f32>> = (0..4).map(|t| b.frames[t * 3 + r].clone()).collect();
        let dts: Vec<f64> = (0..4).map(|t| b.dts[t * 3 + r]).collect();
        let single = model.forward_sequence(&frames, &dts).unwrap();
        for t in 0..4 {
            for k in 0..4 {
                assert!((single[t][k] - y[(t * 3 + r) * 4 + k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn f32_and_f64_agree() {
    let m64 = PolicyModel::<f64>::new(&tiny(Variant::Lstm, WiringMode::Dense, true)).unwrap();
    let m32 = m64.cast::<f32>();
    let b = batch(2, 3, 4);
    let b32 = SeqBatch {
        rows: 2,
        steps: 3,
        frames: b.frames.clone(),
        dts: b.dts.iter().map(|v| *v as f32).collect(),
        labels: b.labels.iter().map(|v| *v as f32).collect(),
    };
    let l64 = m64.loss(&b).unwrap();
    let l32 = m32.loss(&b32).unwrap() as f64;
    assert!((l64 - l32).abs() < 1e-4 * l64.max(1.0));
}

#[test]
fn full_size_parameter_counts() {
    let m = PolicyModel::<f32>::zeros(&ModelConfig::full(Variant::Lstm)).unwrap();
    assert_eq!(m.cnn_param_count(), 103_652);
    assert_eq!(m.head_param_count(), 308_004);
    let mut ncp = ModelConfig::full(Variant::Liquid);
    ncp.wiring = WiringMode::Ncp;
    let m = PolicyModel::<f32>::zeros(&ncp).unwrap();
    assert_eq!(m.head_param_count(), 3 * (34 * (128 + 34) + 34));
}
