use liquidhike::config::RunConfig;
use liquidhike::dataset::{read_dataset, write_dataset};
use liquidhike::eval::{make_renderer, run_attempt, ExpertDriver, Outcome};
use liquidhike::expert::{generate_trajectory, training_scene, AugmentConfig, SamplingMode};
use liquidhike::nn::model::{ModelConfig, PolicyModel, Variant};
use liquidhike::scene::{render_plain, Background, Image, Scene, Target, TargetColor};
use liquidhike::simcore::QuadState;
use liquidhike::splat::{render_splats, sphere_to_splats, RendererKind, SplatRenderParams, SplatScene, SplatStyle};
use liquidhike::train::{fit, TrainConfig};

/// Pixels whose color is nearer the target than the background, as an
/// equivalent disk radius.
fn disk_radius(img: &Image, bg: &Image, rgb: [f32; 3]) -> f64 {
    let d2 = |a: [f32; 3], b: [f32; 3]| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f32>();
    let mut n = 0usize;
    for r in 0..img.height {
        for c in 0..img.width {
            let p = img.pixel(c, r);
            if d2(p, rgb) < d2(p, bg.pixel(c, r)) {
                n += 1;
            }
        }
    }
    (n as f64 / std::f64::consts::PI).sqrt()
}

#[test]
fn splat_disk_matches_plain_sphere() {
    let rc = RunConfig::default();
    let intr = rc.scene.camera;
    let style = SplatStyle::default();
    // Disks of 4 px and up. Below that the fixed screen-space dilation of
    // every splat adds about a pixel to the mask radius.
    for (d, radius) in [(0.5, 0.15), (0.75, 0.15), (1.0, 0.15), (1.2, 0.15), (2.0, 0.3), (1.5, 0.25)] {
        let t = Target { position: [d, 0.0, 1.5], radius, color: TargetColor::Blue };
        let s = QuadState::at([0.0, 0.0, 1.5], 0.0);
        let plain = render_plain(&Scene::single(t), &s, &intr);
        let bg = render_plain(&Scene::empty(Background::default()), &s, &intr);
        let splats = SplatScene {
            gaussians: sphere_to_splats(&t, style.gaussians_per_target, 1, &style),
            background: Background::default(),
        };
        let sp = render_splats(&splats, &s, &intr, &SplatRenderParams::default());
        let (rp, rs) = (disk_radius(&plain, &bg, t.color.rgb()), disk_radius(&sp, &bg, t.color.rgb()));
        assert!(rp > 3.5, "sphere too small to measure: {rp}");
        assert!((rs - rp).abs() <= 0.2 * rp, "d={d}: plain radius {rp:.2}px, splat {rs:.2}px");
    }
}

#[test]
fn expert_in_loop_follows_generated_states() {
    let mut rc = RunConfig::default();
    rc.expert.mode = SamplingMode::Fixed(3.0);
    let ev = rc.eval;
    let h = rc.harness(&ev);
    let req = rc.gen_request();
    for i in 0..6 {
        let traj = generate_trajectory(&req, i).unwrap();
        let scene = training_scene(traj.meta.color, &rc.scene.target);
        let renderer = make_renderer(&h, RendererKind::Plain, &scene);
        let mut driver = ExpertDriver::new(rc.expert.controller, rc.sim);
        let (rec, _) = run_attempt(&h, &mut driver, &scene, &renderer, traj.meta.init).unwrap();
        assert_eq!(rec.outcome, Outcome::Success, "trajectory {i}");
        let n = rec.trace.len().min(traj.states.len());
        assert!(n > 20, "trajectory {i}: only {n} common steps");
        for k in 0..n {
            assert_eq!(rec.trace[k].state, traj.states[k], "trajectory {i} step {k}");
            assert_eq!(rec.trace[k].command, traj.samples[k].label, "trajectory {i} step {k}");
        }
    }
}

#[test]
fn dataset_round_trips_through_disk() {
    let mut rc = RunConfig::default();
    rc.expert.n_traj = 3;
    let req = rc.gen_request();
    let trajs: Vec<_> = (0..3).map(|i| generate_trajectory(&req, i).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(dir.path(), &trajs).unwrap();
    let (m2, back) = read_dataset(dir.path()).unwrap();
    assert_eq!(m, m2);
    assert_eq!(back.len(), trajs.len());
    for (a, b) in trajs.iter().zip(&back) {
        assert_eq!(a.meta, b.meta);
        assert_eq!(a.samples, b.samples);
    }
}

#[test]
fn overfits_a_single_trajectory() {
    let rc = RunConfig::default();
    let traj = generate_trajectory(&rc.gen_request(), 0).unwrap();
    let mut cfg = ModelConfig::desk(Variant::Liquid);
    cfg.state_size = 16;
    cfg.backbone_units = 32;
    let mut model = PolicyModel::<f32>::new(&cfg).unwrap();
    let tc = TrainConfig {
        seq_len: 4,
        shift: 4,
        batch_size: 1,
        epochs: 200,
        lr: 1e-3,
        lr_decay: 0.995,
        frame_epochs: 0,
        augment: AugmentConfig::NONE,
        ..TrainConfig::desk()
    };
    let rep = fit(&mut model, std::slice::from_ref(&traj), &tc, |_| {}).unwrap();
    assert_eq!(rep.epochs.len(), 200);
    // a 20x drop from the first epoch; the error keeps falling slowly after that
    let first = rep.epochs[0].train_mse;
    assert!(rep.best_val < 0.05 * first, "first {first}, best {}", rep.best_val);
}
