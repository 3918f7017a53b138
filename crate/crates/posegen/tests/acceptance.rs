//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use posegen::gateway::mock::MockBackend;
use posegen::gateway::server::{serve, ServeOptions};
use posegen::gateway::wire::{self, PoseConvention};
use posegen::gateway::{Backend, GatewayError, GenerationRequest, HmrPerson, SegmentInstance};
use posegen::models::bundled_body_model;
use posegen::pipeline::dataset::{self, AnnotationRecord};
use posegen_core::compose::{apply_occlusion, union_masks};
use posegen_core::depth::render_depth;
use posegen_core::eval::{pa_mpjpe, Keypoints2D};
use posegen_core::losses::{
    loss_2d, loss_2d_scale_derivative, loss_3d, reproject, total_loss, HmrPrediction, Loss2dOptions, LossWeights,
};
use posegen_core::pose_prior::{
    augment_pose, difficulty_score, is_hard_pose, Activation, AugmentationConfig, DenseLayer, LatentMode, DEFAULT_TAU,
};
use posegen_core::{
    axis_angle_to_matrix, rle, toy, BodyModelParts, BodyModelSpec, DepthMap, Joints3D, MaskImage, Mesh, PoseParams,
    ShapeParams, WeakPerspectiveCamera,
};
use posegen_oracles::rng::SplitMix64;
use posegen_oracles::{mlp, procrustes, raster};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn r3(rng: &mut SplitMix64, lim: f64) -> [f64; 3] {
    [rng.range(-lim, lim), rng.range(-lim, lim), rng.range(-lim, lim)]
}

fn max_dist(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

fn geometry() -> Outcome {
    const SIZE: u32 = 64;
    let spec = toy::body_model();
    let mut rng = SplitMix64(0xACCE);
    let mut drawn = 0;
    for case in 0..100 {
        let pose = PoseParams {
            global_orient: r3(&mut rng, 2.0),
            body_pose: vec![r3(&mut rng, 2.0), r3(&mut rng, 2.0)],
        };
        let shape = ShapeParams {
            betas: vec![rng.range(-3.0, 3.0), rng.range(-3.0, 3.0)],
        };
        let mesh = spec.forward(&pose, &shape).map_err(|e| e.to_string())?;
        let n = mesh.vertices.len() as f64;
        let cx = mesh.vertices.iter().map(|v| v[0]).sum::<f64>() / n;
        let cy = mesh.vertices.iter().map(|v| v[1]).sum::<f64>() / n;
        let s = rng.range(0.4, 1.6);
        let (tx, ty) = (-s * cx + rng.range(-0.3, 0.3), -s * cy + rng.range(-0.3, 0.3));
        let cam = WeakPerspectiveCamera::new(s, tx, ty, SIZE, SIZE).unwrap();
        let got = render_depth(&mesh, &cam, SIZE, SIZE).map_err(|e| e.to_string())?;

        let screen: Vec<[f64; 2]> = mesh
            .vertices
            .iter()
            .map(|p| [(s * p[0] + tx + 1.0) / 2.0 * SIZE as f64, (s * p[1] + ty + 1.0) / 2.0 * SIZE as f64])
            .collect();
        let zmin = mesh.vertices.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
        let depths: Vec<f64> = mesh.vertices.iter().map(|p| p[2] - zmin + 0.1).collect();
        let want = raster::rasterize(&screen, &depths, &mesh.faces, SIZE, SIZE);
        let diff = got.data.iter().zip(&want).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
        ensure!(diff == 0, "case {case}: {diff} pixels differ from the brute-force rasterizer");
        drawn += usize::from(got.foreground_count() > 0);
    }
    Ok(format!("100 meshes at 64x64 bit-identical, {drawn} with foreground"))
}

fn similarity(j: &[[f64; 3]], r: [f64; 3], s: f64, t: [f64; 3]) -> Vec<[f64; 3]> {
    let m = axis_angle_to_matrix(r);
    j.iter()
        .map(|p| {
            let mut out = t;
            for i in 0..3 {
                out[i] += s * (m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2]);
            }
            out
        })
        .collect()
}

fn procrustes_suite() -> Outcome {
    let mut rng = SplitMix64(0x9A);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let n = 3 + (rng.below(22) as usize);
        let gt: Vec<[f64; 3]> = (0..n).map(|_| r3(&mut rng, 1.0)).collect();
        let pred = similarity(&gt, r3(&mut rng, 3.0), rng.range(0.2, 5.0), r3(&mut rng, 2.0));
        let e = pa_mpjpe(&Joints3D { joints: pred }, &Joints3D { joints: gt }).map_err(|e| e.to_string())?;
        ensure!(e < 1e-6, "case {case}: PA-MPJPE {e} mm on an exact similarity");
        worst = worst.max(e);
    }
    let mut gap = 0.0f64;
    for case in 0..20 {
        let pred: Vec<[f64; 3]> = (0..5).map(|_| r3(&mut rng, 1.0)).collect();
        let gt: Vec<[f64; 3]> = (0..5).map(|_| r3(&mut rng, 1.0)).collect();
        let ours = pa_mpjpe(&Joints3D { joints: pred.clone() }, &Joints3D { joints: gt.clone() })
            .map_err(|e| e.to_string())?;
        let theirs = procrustes::pa_mpjpe(&pred, &gt);
        ensure!((ours - theirs).abs() < 1e-3, "case {case}: {ours} mm vs oracle {theirs} mm");
        gap = gap.max((ours - theirs).abs());
    }
    Ok(format!(
        "50 similarity sets max {worst:.1e} mm (< 1e-6); 20 five-joint sets within {gap:.1e} mm of the optimiser (< 1e-3)"
    ))
}

fn two_joint_model() -> BodyModelSpec {
    BodyModelSpec::new(BodyModelParts {
        template: vec![[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
        shape_dirs: vec![0.0; 4 * 3 * 2],
        num_betas: 2,
        pose_dirs: vec![],
        joint_regressor: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        skinning_weights: vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        parents: vec![-1, 0],
        faces: vec![[0, 1, 2], [1, 3, 2]],
    })
    .unwrap()
}

fn body_model_suite() -> Outcome {
    let spec = toy::body_model();
    let zero = spec.forward(&PoseParams::zeros(2), &ShapeParams::zeros(2)).map_err(|e| e.to_string())?;
    let exact = zero.vertices.iter().flatten().zip(spec.template().iter().flatten()).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure!(exact, "zero pose and shape do not reproduce the template bit for bit");

    // joint 1 sits at (0, 1, 0); vertex 3 is (1, 0, 0) from it and a quarter
    // turn about +z carries it to (0, 1, 0) from the joint
    let two = two_joint_model();
    let mut pose = PoseParams::zeros(1);
    pose.body_pose[0] = [0.0, 0.0, std::f64::consts::FRAC_PI_2];
    let v = two.forward(&pose, &ShapeParams::zeros(2)).map_err(|e| e.to_string())?.vertices[3];
    let fixture_err = max_dist(&[v], &[[0.0, 2.0, 0.0]]);
    ensure!(fixture_err <= 1e-9, "quarter-turn vertex at {v:?}, expected [0, 2, 0]");

    let mut rng = SplitMix64(0xB0D7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut pose = PoseParams {
            global_orient: r3(&mut rng, 2.5),
            body_pose: vec![r3(&mut rng, 2.5), r3(&mut rng, 2.5)],
        };
        let shape = ShapeParams {
            betas: vec![rng.range(-3.0, 3.0), rng.range(-3.0, 3.0)],
        };
        let rotated = spec.forward(&pose, &shape).map_err(|e| e.to_string())?;
        let g = pose.global_orient;
        pose.global_orient = [0.0; 3];
        let base = spec.forward(&pose, &shape).map_err(|e| e.to_string())?;
        let rest = Mesh {
            vertices: spec.shaped_template(&shape).map_err(|e| e.to_string())?,
            faces: vec![],
        };
        let root = spec.regress_joints(&rest).map_err(|e| e.to_string())?.joints[0];
        let moved: Vec<[f64; 3]> = base
            .vertices
            .iter()
            .map(|v| {
                let d = [v[0] - root[0], v[1] - root[1], v[2] - root[2]];
                let r = similarity(&[d], g, 1.0, root);
                r[0]
            })
            .collect();
        worst = worst.max(max_dist(&rotated.vertices, &moved));
    }
    ensure!(worst <= 1e-9, "global rotation equivariance off by {worst:e} m");
    Ok(format!(
        "template bit-exact; quarter turn within {fixture_err:.1e} m; equivariance max {worst:.1e} m over 100 poses (<= 1e-9)"
    ))
}

fn occlusion_suite() -> Outcome {
    let d = DepthMap::new(2, 2, vec![2.0, 0.0, 3.0, 4.0]).unwrap();
    let m = MaskImage::new(2, 2, vec![true, false, false, false], "box").unwrap();
    let occ = |d: &DepthMap, m: &MaskImage| apply_occlusion(d, m).map_err(|e| e.to_string());
    ensure!(occ(&d, &m)?.data == [0.0, 0.0, 3.0, 4.0], "worked example");
    ensure!(occ(&d, &MaskImage::empty(2, 2))? == d, "empty mask changes depth");
    ensure!(occ(&d, &MaskImage::filled(2, 2, true))?.data == [0.0; 4], "full mask leaves depth");

    let mut rng = SplitMix64(0xE03);
    for case in 0..200 {
        let (w, h) = (1 + rng.below(16) as u32, 1 + rng.below(16) as u32);
        let px = (w * h) as usize;
        let depth: Vec<f32> = (0..px).map(|_| if rng.coin(0.3) { 0.0 } else { rng.range(0.1, 5.0) as f32 }).collect();
        let d = DepthMap::new(w, h, depth).unwrap();
        let p = rng.unit();
        let m1 = MaskImage::new(w, h, (0..px).map(|_| rng.coin(p)).collect(), "a").unwrap();
        let extra = MaskImage::new(w, h, (0..px).map(|_| rng.coin(0.3)).collect(), "b").unwrap();
        let m2 = union_masks(&[m1.clone(), extra], w, h).map_err(|e| e.to_string())?;
        let once = occ(&d, &m1)?;
        ensure!(occ(&once, &m1)? == once, "case {case}: not idempotent");
        let shrinks = (0..px).all(|i| once.data[i] <= 0.0 || d.data[i] > 0.0);
        ensure!(shrinks, "case {case}: silhouette grew");
        let more = occ(&d, &m2)?;
        let monotone = (0..px).all(|i| more.data[i] <= 0.0 || once.data[i] > 0.0);
        ensure!(monotone, "case {case}: larger mask kept more pixels");
    }
    Ok("3 worked examples; idempotence, shrinkage and monotonicity on 200 random pairs".into())
}

fn oracle_layers(layers: &[DenseLayer]) -> Vec<mlp::Layer<'_>> {
    layers
        .iter()
        .map(|l| mlp::Layer {
            weights: &l.weights,
            bias: &l.bias,
            leaky_slope: match l.activation {
                Activation::LeakyRelu(s) => Some(s),
                Activation::Identity => None,
            },
        })
        .collect()
}

fn pose_prior_suite() -> Outcome {
    let vae = toy::pose_prior();
    let latent = vae.latent_dim();
    let mut rng = SplitMix64(0x9E1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let pose = PoseParams {
            global_orient: r3(&mut rng, 2.0),
            body_pose: vec![r3(&mut rng, 2.0), r3(&mut rng, 2.0)],
        };
        let out = mlp::forward(&oracle_layers(vae.encoder()), &pose.body_pose_flat());
        let dist = vae.encode(&pose).map_err(|e| e.to_string())?;
        for (a, b) in dist.mu.iter().zip(&out[..latent]) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in dist.sigma.iter().zip(&out[latent..]) {
            worst = worst.max((a - b.exp()).abs());
        }
        let z: Vec<f64> = (0..latent).map(|_| rng.range(-40.0, 40.0)).collect();
        let decoded = vae.decode(&z).map_err(|e| e.to_string())?.body_pose_flat();
        for (a, b) in decoded.iter().zip(mlp::forward(&oracle_layers(vae.decoder()), &z)) {
            worst = worst.max((a - b).abs());
        }

        let cfg = AugmentationConfig {
            scale: 0.0,
            ..Default::default()
        };
        let seed = rng.next_u64();
        let aug = augment_pose(&vae, &pose, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let mean = vae.decode(&dist.mu).map_err(|e| e.to_string())?;
        ensure!(aug.body_pose == mean.body_pose, "s = 0 augmentation differs from decode(mean)");
        let cfg = AugmentationConfig::default();
        let a = augment_pose(&vae, &pose, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let b = augment_pose(&vae, &pose, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        ensure!(a == b, "seeded augmentation is not reproducible");
    }
    ensure!(worst <= 1e-9, "encode/decode off the matrix oracle by {worst:e}");
    ensure!(DEFAULT_TAU == 30.0, "default tau is {DEFAULT_TAU}");
    ensure!(is_hard_pose(31.0, 30.0) && !is_hard_pose(30.0, 30.0) && !is_hard_pose(5.0, 30.0), "gate is not strict");
    let zero = difficulty_score(&vae, &PoseParams::zeros(2), LatentMode::Mean, &mut ChaCha8Rng::seed_from_u64(0))
        .map_err(|e| e.to_string())?;
    ensure!(zero == 0.0, "zero pose scores {zero}");
    Ok(format!(
        "encode/decode max error {worst:.1e} (<= 1e-9) on 200 cases; gate strict at 30; s = 0 equals decode(mean); seeded"
    ))
}

fn loss_suite() -> Outcome {
    let spec = toy::body_model();
    let pred = |s: f64| HmrPrediction {
        pose: PoseParams {
            global_orient: [0.1, -0.2, 0.05],
            body_pose: vec![[0.4, 0.1, -0.3], [-0.2, 0.5, 0.2]],
        },
        shape: ShapeParams { betas: vec![0.5, -1.0] },
        camera: WeakPerspectiveCamera::new(s, 0.05, -0.1, 256, 192).unwrap(),
    };
    let opts = Loss2dOptions::default();
    let p = pred(1.2);
    let j = reproject(&p, &spec, None).map_err(|e| e.to_string())?;
    let l = |gt: &Keypoints2D, p: &HmrPrediction| loss_2d(p, gt, &spec, &opts).map_err(|e| e.to_string());
    ensure!(l(&Keypoints2D::all_visible(j.clone()), &p)? == 0.0, "2D loss not zero at truth");
    let one = Keypoints2D {
        points: vec![[j[0][0] + 3.0, j[0][1] + 4.0], j[1], j[2]],
        visibility: vec![true, false, false],
    };
    let v = l(&one, &p)?;
    ensure!((v - 5.0).abs() < 1e-9, "(3, 4) px offset gives {v}");
    ensure!(loss_3d(&p, &p.pose, &p.shape).map_err(|e| e.to_string())? == 0.0, "3D loss not zero at truth");
    let mut moved = p.shape.clone();
    moved.betas[0] += 1.0;
    let v = loss_3d(&p, &p.pose, &moved).map_err(|e| e.to_string())?;
    ensure!((v - 1.0).abs() < 1e-12, "unit beta residual gives {v}");
    let w = LossWeights::default();
    ensure!(total_loss(0.0, 0.0, &w) == 0.0 && total_loss(2.0, 3.0, &w) == 5.0, "combined loss is not the sum");
    let mut rng = SplitMix64(0x1055);
    for _ in 0..50 {
        let (a, b) = (rng.range(0.0, 100.0), rng.range(0.0, 100.0));
        ensure!(total_loss(a, b, &w) == a + b, "combined loss is not the sum");
    }

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let s = rng.range(0.5, 2.0);
        let gt = Keypoints2D::all_visible(j.iter().map(|q| [q[0] + rng.range(-20.0, 20.0), q[1] + rng.range(-20.0, 20.0)]).collect());
        let h = 1e-6;
        let fd = (l(&gt, &pred(s + h))? - l(&gt, &pred(s - h))?) / (2.0 * h);
        let analytic = loss_2d_scale_derivative(&pred(s), &gt, &spec, &opts).map_err(|e| e.to_string())?;
        let rel = (fd - analytic).abs() / analytic.abs().max(1.0);
        ensure!(rel <= 1e-4, "scale derivative {analytic} vs central difference {fd}");
        worst = worst.max(rel);
    }
    Ok(format!("zero at truth, 3-4-5 and unit fixtures, sum law; scale derivative within {worst:.1e} relative (<= 1e-4)"))
}

const CATEGORIES: [&str; 8] = ["diving", "yoga", "surfing", "skiing", "gymnastics", "ballet", "climbing", "parkour"];

fn spawn_serve_mock() -> Result<(Child, String), String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_posegen"))
        .args(["serve-mock", "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).map_err(|e| e.to_string())?;
    let url = line.trim().strip_prefix("listening on ").ok_or(format!("unexpected banner {line:?}"))?;
    Ok((child, url.to_string()))
}

fn cli_generate(backend: &str, out: &Path) -> Result<(), String> {
    let mut args = vec!["generate", "--backend", backend, "--seed", "7", "--out", out.to_str().unwrap()];
    for c in CATEGORIES {
        args.extend(["--category", c]);
    }
    let o = Command::new(env!("CARGO_BIN_EXE_posegen"))
        .args(&args)
        .env_remove("HPC_BACKEND_URL")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(o.status.success(), "generate --backend {backend}: {}", String::from_utf8_lossy(&o.stderr));
    Ok(())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (local, remote) = (dir.path().join("mock"), dir.path().join("http"));
    cli_generate("mock", &local)?;
    let (mut child, url) = spawn_serve_mock()?;
    let result = cli_generate(&url, &remote);
    let _ = child.kill();
    let _ = child.wait();
    result?;

    let a = std::fs::read(local.join("annotations.jsonl")).map_err(|e| e.to_string())?;
    let b = std::fs::read(remote.join("annotations.jsonl")).map_err(|e| e.to_string())?;
    ensure!(!a.is_empty(), "no annotations");
    ensure!(a == b, "annotations.jsonl differs between the in-process mock and serve-mock");

    let body = bundled_body_model();
    let records: Vec<AnnotationRecord> = dataset::read_annotations(&local).map_err(|e| e.to_string())?;
    for r in &records {
        let ok = dataset::verify_depth_round_trip(&body, &local, r).map_err(|e| e.to_string())?;
        ensure!(ok, "{}: re-rendered depth differs from the stored map", r.sample_id);
    }
    let manifest = dataset::read_manifest(&local).map_err(|e| e.to_string())?;
    let hard: std::collections::BTreeSet<usize> = records.iter().filter(|r| r.gated).map(|r| r.input_index).collect();
    ensure!(manifest.counts.hard_inputs == hard.len(), "hard inputs without samples: {:?}", manifest.counts);
    ensure!(!hard.is_empty(), "no hard input among the {} categories", CATEGORIES.len());
    for i in &hard {
        let n = records.iter().filter(|r| r.input_index == *i && r.gated).count();
        ensure!(n == 3, "hard input {i} has {n} samples");
    }
    for r in records.iter().filter(|r| !r.gated) {
        ensure!(!hard.contains(&r.input_index), "hard input {} also has an ungated sample", r.input_index);
    }
    Ok(format!(
        "{} records identical over HTTP; depth round trip bit-exact; {} hard inputs x 3 samples",
        records.len(),
        hard.len()
    ))
}

fn wire_suite() -> Outcome {
    let mut rng = SplitMix64(0x41E);
    for case in 0..500 {
        let (w, h) = (1 + rng.below(40) as u32, 1 + rng.below(40) as u32);
        let p = rng.unit();
        let mask = MaskImage::new(w, h, (0..w * h).map(|_| rng.coin(p)).collect(), "m").unwrap();
        let enc = rle::encode(&mask);
        ensure!(
            enc.counts == posegen_oracles::rle::encode(&mask.data, h as usize, w as usize),
            "case {case}: counts differ from the naive encoder"
        );
        let text = serde_json::to_string(&wire::instance_to_wire(&SegmentInstance {
            class_label: "chair".into(),
            mask: enc,
            score: 0.5,
        }))
        .map_err(|e| e.to_string())?;
        let back: wire::WireInstance = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let seg = wire::segmentation_from_wire(&[back], (w, h)).map_err(|e| e.to_string())?;
        let decoded = rle::decode(&seg.instances[0].mask, "m").map_err(|e| e.to_string())?;
        ensure!(decoded == mask, "case {case}: mask changed over the wire");
    }

    let mock = MockBackend::default();
    let req = GenerationRequest::new("a photo of an athlete doing yoga", 3);
    let q = wire::txt2img_request(&req, "req-1");
    let q2: wire::Txt2ImgRequest = round_trip(&q)?;
    ensure!(q2 == q && q2.to_generation() == req, "txt2img request changed");
    let mut small = req.clone();
    small.width = 64;
    small.height = 64;
    let img = mock.txt2img(&small).map_err(|e| e.to_string())?;
    let z = mock.encode_latents(&img, None).map_err(|e| e.to_string())?;
    let depth = DepthMap::new(8, 8, (0..64).map(|i| (i % 5) as f32 / 4.0).collect()).unwrap();
    let d = wire::depth2img_request(&z, &depth, &small, "req-2");
    let d2: wire::Depth2ImgRequest = round_trip(&d)?;
    ensure!(d2 == d, "depth2img request changed");
    ensure!(wire::latents_from_wire(&d2.latents).map_err(|e| e.to_string())? == z, "latents changed");
    ensure!(wire::depth_from_wire(&d2.depth).map_err(|e| e.to_string())? == depth, "depth changed");
    ensure!(wire::image_from_wire(&round_trip(&wire::image_to_wire(&img))?).map_err(|e| e.to_string())? == img, "image changed");
    for p in mock.hmr(&img, None).map_err(|e| e.to_string())?.people {
        for conv in [PoseConvention::Full, PoseConvention::Body] {
            let w: wire::WirePerson = round_trip(&wire::person_to_wire(&p, conv))?;
            let back: HmrPerson = wire::person_from_wire(&w, Some(2), (64, 64)).map_err(|e| e.to_string())?;
            ensure!(back == p, "person changed over the wire ({conv:?})");
        }
    }

    ensure!(matches!(wire::check_version("2"), Err(GatewayError::Protocol(_))), "version 2 accepted");
    let server = serve(std::sync::Arc::new(MockBackend::default()), "127.0.0.1:0", ServeOptions::default())
        .map_err(|e| e.to_string())?;
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut stale = serde_json::to_value(&q).map_err(|e| e.to_string())?;
    stale["api_version"] = "0".into();
    let mut resp = agent
        .post(format!("{}/v1/txt2img", server.url()))
        .header("content-type", "application/json")
        .send(stale.to_string())
        .map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let body: serde_json::Value =
        serde_json::from_str(&resp.body_mut().read_to_string().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    server.shutdown();
    ensure!(status == 400 && body["error"]["code"] == "version_mismatch", "stale request got {status} {body}");
    Ok("500 masks round-trip and match the naive codec; request, image, latent, depth and person schemas round-trip; version mismatch rejected".into())
}

fn round_trip<T: serde::Serialize + serde::de::DeserializeOwned>(v: &T) -> Result<T, String> {
    let text = serde_json::to_string(v).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn main() {
    let suites: [(&str, fn() -> Outcome, Option<u64>); 8] = [
        ("geometry oracle", geometry, Some(30)),
        ("procrustes", procrustes_suite, Some(10)),
        ("body model", body_model_suite, None),
        ("occlusion composition", occlusion_suite, None),
        ("pose prior", pose_prior_suite, None),
        ("losses", loss_suite, None),
        ("end-to-end determinism", end_to_end, Some(60)),
        ("wire protocol", wire_suite, None),
    ];
    let mut failed = 0;
    for (name, suite, limit) in suites {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(suite)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if took > Duration::from_secs(l) => Err(format!("took {:.1} s, limit {l} s", took.as_secs_f64())),
            (o, _) => o,
        };
        let budget = limit.map_or(String::new(), |l| format!(", limit {l} s"));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({:.2} s{budget})", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} ({:.2} s{budget})", took.as_secs_f64());
            }
        }
    }
    println!("{} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
