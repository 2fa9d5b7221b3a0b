//! Acceptance suite: every shipped guarantee, one test per criterion, each
//! printing a single pass/fail line (run with `--nocapture` to see them).
//!
//! The demo fixture is a 4-room ring world of 256 frames at 16x16x3, with a
//! 4-dimensional latent model (tanh trunk of 64, Bernoulli pixels) trained
//! for 200 epochs of RMSprop minibatches (batch 20, seed 1) — exactly what
//! `latentnav gen-data` + `latentnav train` produce with the demo config.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use latentnav::graph::{build_frame_graph, oracle_shortest_path, FrameGraph};
use latentnav::netpbm;
use latentnav::planner::{
    init_straight_path, plan_geodesic, Decoder, IdentityDecoder, PlannerConfig,
};
use latentnav::routing::{category_count, continuity_gap, match_route, Route, RouteSource};
use latentnav::rng::{mix, SplitMix64};
use latentnav::selfcheck::{vae_gradient_suite, GradcheckConfig};
use latentnav::vae::{
    decode, encode, kl_divergence, slice_montage, train, GaussianPosterior, Likelihood,
    ModelConfig, ModelParams, TrainConfig, VaeDecoder,
};
use latentnav::world::{generate_tour, TourDataset, WorldConfig};

fn report(criterion: usize, name: &str, pass: bool, details: &str) {
    println!(
        "criterion {criterion} ({name}): {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({name}) failed: {details}");
}

fn demo_world(alias: bool) -> WorldConfig {
    WorldConfig {
        num_rooms: 4,
        frames: 256,
        image_height: 16,
        image_width: 16,
        channels: 3,
        transition_width: 0.02,
        alias_pairs: if alias { vec![(0, 2)] } else { Vec::new() },
        seed: 1,
    }
}

fn demo_model_config() -> ModelConfig {
    ModelConfig {
        latent_dim: 4,
        image_height: 16,
        image_width: 16,
        channels: 3,
        encoder_hidden: vec![64],
        decoder_hidden: vec![64],
        likelihood: Likelihood::Bernoulli,
    }
}

fn demo_train_config() -> TrainConfig {
    TrainConfig {
        batch_size: 20,
        epochs: 200,
        mc_samples: 1,
        seed: 1,
        shuffle: true,
        rmsprop: Default::default(),
    }
}

struct Demo {
    dataset: TourDataset,
    params: ModelParams,
    history: Vec<f64>,
}

fn trained_demo(alias: bool) -> Demo {
    let dataset = generate_tour(&demo_world(alias)).expect("demo world generates");
    let cfg = demo_train_config();
    // Same derivation as `latentnav train`: init from mix(seed), loop on seed.
    let mut params =
        ModelParams::init(demo_model_config(), mix(cfg.seed)).expect("demo model initializes");
    let rep = train(&mut params, &dataset.images(), &cfg).expect("demo training runs");
    Demo {
        dataset,
        params,
        history: rep.epoch_mean_loss,
    }
}

fn demo() -> &'static Demo {
    static DEMO: OnceLock<Demo> = OnceLock::new();
    DEMO.get_or_init(|| trained_demo(false))
}

fn aliased_demo() -> &'static Demo {
    static DEMO: OnceLock<Demo> = OnceLock::new();
    DEMO.get_or_init(|| trained_demo(true))
}

fn demo_latents(demo: &Demo) -> Vec<Vec<f64>> {
    demo.dataset
        .frames
        .iter()
        .map(|f| encode(&demo.params, &f.image).expect("encode demo frame").mu)
        .collect()
}

#[test]
fn criterion_1_gradient_fidelity() {
    let start = std::time::Instant::now();
    let suite = vae_gradient_suite(&GradcheckConfig::default()).expect("suite runs");
    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        "gradient fidelity",
        suite.cases >= 20 && suite.passed && elapsed < 60.0,
        &format!(
            "{} models, worst relative error {:.3e} (< 1e-5), {elapsed:.1}s",
            suite.cases, suite.worst_relative_error
        ),
    );
}

#[test]
fn criterion_2_kl_cross_check() {
    let start = std::time::Instant::now();

    // Hand values, reproduced by the closed form to 6 decimals.
    let shifted = GaussianPosterior::new(vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]);
    let hand_1 = (kl_divergence(&shifted) - 0.5).abs() < 5e-7;
    let wide = GaussianPosterior::new(vec![0.0], vec![4.0f64.ln()]);
    let hand_2 = (kl_divergence(&wide) - 0.806853).abs() < 5e-7;

    // Closed form vs Monte Carlo for 100 random posteriors.
    let mut rng = SplitMix64::new(271828);
    let samples = 100_000;
    let mut mc_failures = 0;
    let mut worst_sigmas = 0.0f64;
    for _ in 0..100 {
        let dim = 1 + rng.next_index(6);
        let post = GaussianPosterior::new(
            (0..dim).map(|_| rng.next_range(-3.0, 3.0)).collect(),
            (0..dim).map(|_| rng.next_range(-2.0, 2.0)).collect(),
        );
        let closed = kl_divergence(&post);
        let sigma = post.sigma();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut eps = vec![0.0; dim];
        for _ in 0..samples {
            rng.fill_normal(&mut eps);
            let mut value = 0.0;
            for j in 0..dim {
                let z = post.mu[j] + sigma[j] * eps[j];
                value += -0.5 * post.log_var[j] - 0.5 * eps[j] * eps[j] + 0.5 * z * z;
            }
            sum += value;
            sum_sq += value * value;
        }
        let mean = sum / samples as f64;
        let se = ((sum_sq / samples as f64 - mean * mean).max(0.0) / samples as f64).sqrt();
        let sigmas = (closed - mean).abs() / se;
        worst_sigmas = worst_sigmas.max(sigmas);
        if sigmas > 3.0 {
            mc_failures += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        2,
        "KL cross-check",
        hand_1 && hand_2 && mc_failures == 0 && elapsed < 60.0,
        &format!(
            "hand values exact, 100 posteriors within 3 SE (worst {worst_sigmas:.2} SE), {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_3_training_descent() {
    let start = std::time::Instant::now();
    let demo = demo();
    let elapsed = start.elapsed().as_secs_f64();
    let history = &demo.history;
    assert_eq!(history.len(), 200);
    let halved = history[199] < 0.5 * history[0];

    // Non-increasing under a 10-epoch moving average.
    let moving: Vec<f64> = (0..=history.len() - 10)
        .map(|i| history[i..i + 10].iter().sum::<f64>() / 10.0)
        .collect();
    let monotone = moving.windows(2).all(|w| w[1] <= w[0]);

    report(
        3,
        "training descent",
        halved && monotone && elapsed < 600.0,
        &format!(
            "mean loss {:.2} -> {:.2} (ratio {:.3} < 0.5), moving average monotone, {elapsed:.1}s",
            history[0],
            history[199],
            history[199] / history[0]
        ),
    );
}

#[test]
fn criterion_4_identity_decoder_geodesic() {
    let start = std::time::Instant::now();
    let decoder = IdentityDecoder { dim: 4 };
    // Endpoint separation well above alpha * (N - 1): in-place sweeps damp
    // rounding noise instead of amplifying it along the point chain.
    let z_start = vec![1.5, -2.0, 1.0, -0.5];
    let z_end = vec![-1.5, 2.0, -1.0, 2.5];
    let cfg = PlannerConfig::default();

    let path = plan_geodesic(&z_start, &z_end, &decoder, &cfg).expect("plan runs");
    let straight = init_straight_path(&z_start, &z_end, cfg.points).unwrap();
    let max_deviation = path
        .points()
        .iter()
        .zip(straight.points())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0f64, f64::max);

    let direct: f64 = z_start
        .iter()
        .zip(&z_end)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let total = latentnav::planner::path_length(&path, &decoder).unwrap();
    let length_error = (total - direct).abs();

    // First sweep in isolation.
    let one_sweep = plan_geodesic(
        &z_start,
        &z_end,
        &decoder,
        &PlannerConfig {
            max_sweeps: 1,
            tol: 0.0,
            ..cfg
        },
    )
    .unwrap();
    let first_sweep_move = one_sweep
        .points()
        .iter()
        .zip(straight.points())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0f64, f64::max);

    let elapsed = start.elapsed().as_secs_f64();
    report(
        4,
        "identity-decoder geodesic",
        max_deviation < 1e-6
            && length_error < 1e-6
            && first_sweep_move <= 1e-8
            && !path.step_too_large()
            && elapsed < 5.0,
        &format!(
            "max deviation {max_deviation:.2e} (< 1e-6), length error {length_error:.2e} (< 1e-6), first sweep max move {first_sweep_move:.2e} (< 1e-8), {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_5_sweep_monotonicity() {
    let start = std::time::Instant::now();
    let demo = demo();
    let decoder = VaeDecoder::new(&demo.params);
    let latents = demo_latents(demo);
    let mut rng = SplitMix64::new(42);
    let pairs: Vec<(usize, usize)> = (0..10)
        .map(|_| (rng.next_index(256), rng.next_index(256)))
        .collect();

    // At the default step size every recorded history must be
    // non-increasing; a regressing sweep is rolled back and flagged, never
    // recorded.
    let cfg = PlannerConfig::default();
    let mut monotone = true;
    let mut flagged = 0;
    for &(a, b) in &pairs {
        let path = plan_geodesic(&latents[a], &latents[b], &decoder, &cfg).expect("plan runs");
        if path.step_too_large() {
            flagged += 1;
        }
        monotone &= path
            .length_history()
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12);
    }

    // The same machinery refines for real once the step size suits this
    // decoder: a context check that the guard above is not vacuous.
    let stable = PlannerConfig {
        alpha: 0.001,
        ..PlannerConfig::default()
    };
    let mut refined = true;
    for &(a, b) in &pairs {
        let path = plan_geodesic(&latents[a], &latents[b], &decoder, &stable).expect("plan runs");
        refined &= !path.step_too_large()
            && path
                .length_history()
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-12);
    }

    let elapsed = start.elapsed().as_secs_f64();
    report(
        5,
        "sweep monotonicity",
        monotone && refined && elapsed < 120.0,
        &format!(
            "10 pairs at default alpha: histories non-increasing ({flagged} flagged as too large and rolled back); refinement at alpha=0.001 monotone and unflagged, {elapsed:.1}s"
        ),
    );
}

fn enumerate_min_weight(
    graph: &FrameGraph,
    current: usize,
    end: usize,
    visited: &mut Vec<bool>,
    weight: f64,
    best: &mut f64,
) {
    if current == end {
        *best = best.min(weight);
        return;
    }
    for &(next, w) in graph.neighbors(current) {
        if !visited[next] {
            visited[next] = true;
            enumerate_min_weight(graph, next, end, visited, weight + w, best);
            visited[next] = false;
        }
    }
}

#[test]
fn criterion_6_oracle_optimality() {
    let start = std::time::Instant::now();

    // Exhaustive enumeration on 100 random graphs of <= 8 nodes.
    let mut exhaustive_ok = true;
    for seed in 0..100u64 {
        let mut rng = SplitMix64::new(1000 + seed);
        let n = 2 + rng.next_index(7);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.next_f64() < 0.6 {
                    edges.push((a, b, rng.next_range(0.0, 5.0)));
                }
            }
        }
        let graph = FrameGraph::from_edges(n, &edges).unwrap();
        let s = rng.next_index(n);
        let e = rng.next_index(n);
        let mut best = f64::INFINITY;
        let mut visited = vec![false; n];
        visited[s] = true;
        enumerate_min_weight(&graph, s, e, &mut visited, 0.0, &mut best);
        match oracle_shortest_path(&graph, s, e) {
            Ok((_, weight)) => exhaustive_ok &= (weight - best).abs() < 1e-9,
            Err(_) => exhaustive_ok &= best.is_infinite(),
        }
    }

    // Dijkstra beats 1000 seeded random walks on the demo frame graph.
    let demo = demo();
    let latents = demo_latents(demo);
    let graph = build_frame_graph(&latents, &demo.dataset.images(), 4).unwrap();
    let (s, e) = (32usize, 96usize);
    let (_, oracle_weight) = oracle_shortest_path(&graph, s, e).expect("demo graph connects");
    let mut walks_ok = true;
    let mut rng = SplitMix64::new(6);
    for _ in 0..1000 {
        let mut node = s;
        let mut weight = 0.0;
        let mut steps = 0u64;
        while node != e {
            let neighbors = graph.neighbors(node);
            let (next, w) = neighbors[rng.next_index(neighbors.len())];
            weight += w;
            node = next;
            steps += 1;
            assert!(steps < 100_000_000, "random walk failed to terminate");
        }
        walks_ok &= oracle_weight <= weight + 1e-9;
    }

    let elapsed = start.elapsed().as_secs_f64();
    report(
        6,
        "oracle optimality",
        exhaustive_ok && walks_ok && elapsed < 120.0,
        &format!(
            "100 graphs match exhaustive enumeration; oracle weight {oracle_weight:.3} <= 1000 random walks, {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_7_route_matching_exactness() {
    let start = std::time::Instant::now();
    let demo = demo();
    assert_eq!(demo.dataset.len(), 256);
    let decoder = VaeDecoder::new(&demo.params);
    let mut rng = SplitMix64::new(7);

    let mut exact = true;
    for _ in 0..100 {
        let len = 2 + rng.next_index(7);
        let points: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..4).map(|_| rng.next_range(-4.0, 4.0)).collect())
            .collect();
        let path = latentnav::planner::LatentPath::from_points(points.clone()).unwrap();
        let route = match_route(&path, &decoder, &demo.dataset).expect("matching runs");

        for (point, &got) in points.iter().zip(route.indices()) {
            // Exhaustive scan with lowest-index tie-break.
            let decoded = decoder.decode(point);
            let mut best = 0usize;
            let mut best_distance = f64::INFINITY;
            for (i, frame) in demo.dataset.frames.iter().enumerate() {
                let d: f64 = decoded
                    .iter()
                    .zip(frame.image.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best_distance {
                    best_distance = d;
                    best = i;
                }
            }
            exact &= got == best;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        7,
        "route matching exactness",
        exact && elapsed < 60.0,
        &format!("100 random paths match the exhaustive scan on 256 frames, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_8_aliased_world_directional_reproduction() {
    let start = std::time::Instant::now();
    let demo = aliased_demo();
    let decoder = VaeDecoder::new(&demo.params);
    let latents = demo_latents(demo);

    // Start and end inside the aliased span: room 0 is indistinguishable
    // from room 2, so decoded paths may teleport between them, while the
    // graph oracle pays real image costs and stays on the true arc.
    let (s, e) = (16usize, 48usize);
    // Step size within the stability guard for this decoder (the default
    // regresses immediately and would leave the straight line).
    let cfg = PlannerConfig {
        alpha: 0.001,
        ..PlannerConfig::default()
    };
    let path = plan_geodesic(&latents[s], &latents[e], &decoder, &cfg).expect("plan runs");
    let route = match_route(&path, &decoder, &demo.dataset).expect("matching runs");
    let (distinct, total) = category_count(&route);
    let geodesic_gap = continuity_gap(&route, &demo.dataset).expect("ground truth available");

    // k = 8 gives both lobes symmetric skip options, so the cheapest route
    // walks the true arc instead of paying the twin-edge toll twice.
    let graph = build_frame_graph(&latents, &demo.dataset.images(), 8).unwrap();
    let (nodes, _) = oracle_shortest_path(&graph, s, e).expect("demo graph connects");
    let oracle_route = Route::new(nodes, RouteSource::Oracle, &demo.dataset).unwrap();
    let oracle_gap = continuity_gap(&oracle_route, &demo.dataset).unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    report(
        8,
        "aliased-world directional reproduction",
        total == 50
            && distinct <= 10
            && geodesic_gap > oracle_gap
            && !path.step_too_large()
            && elapsed < 300.0,
        &format!(
            "geodesic route {distinct}/{total} distinct (<= 10/50), max geo gap {geodesic_gap:.4} > oracle {oracle_gap:.4}, {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_9_slice_correctness() {
    let start = std::time::Instant::now();
    let demo = demo();
    let params = &demo.params;
    let config = params.config();
    let (h, w, c) = (config.image_height, config.image_width, config.channels);

    let mut bitwise = true;
    let mut quantized = true;
    for grid in [2usize, 10] {
        let montage = slice_montage(params, (2, 3), grid, 0.05, 0.95, 0.0).unwrap();
        assert_eq!(montage.height(), grid * h);
        assert_eq!(montage.width(), grid * w);
        let values = latentnav::vae::slice_grid_values(grid, 0.05, 0.95);
        assert_eq!(values[0], 0.05);
        assert_eq!(*values.last().unwrap(), 0.95);
        // Linear spacing of the interior coordinates.
        for (g, &v) in values.iter().enumerate() {
            let ideal = 0.05 + 0.90 * g as f64 / (grid - 1) as f64;
            assert!((v - ideal).abs() < 1e-12);
        }

        for (row, &a) in values.iter().enumerate() {
            for (col, &b) in values.iter().enumerate() {
                let tile = decode(params, &[0.0, 0.0, a, b]);
                for r in 0..h {
                    for cc in 0..w {
                        for ch in 0..c {
                            let got = montage.get(row * h + r, col * w + cc, ch);
                            let want = tile.get(r, cc, ch);
                            bitwise &= got.to_bits() == want.to_bits();
                            quantized &= netpbm::quantize(got) == netpbm::quantize(want);
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        9,
        "slice correctness",
        bitwise && quantized && elapsed < 10.0,
        &format!(
            "G=2 and G=10 tiles bitwise-match direct decodes over [0.05, 0.95], remaining dims 0, {elapsed:.1}s"
        ),
    );
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_latentnav"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("latentnav-accept-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn criterion_10_cli_determinism() {
    let start = std::time::Instant::now();
    let dir = temp_dir("determinism");
    let config = dir.join("demo.json");
    std::fs::write(
        &config,
        r#"{
  "world": {"num_rooms": 4, "frames": 256, "image_height": 16, "image_width": 16,
            "channels": 3, "transition_width": 0.02, "seed": 1},
  "model": {"latent_dim": 4, "image_height": 16, "image_width": 16, "channels": 3,
            "encoder_hidden": [64], "decoder_hidden": [64], "likelihood": "bernoulli"},
  "train": {"batch_size": 20, "epochs": 200, "seed": 1}
}"#,
    )
    .unwrap();
    let config = config.to_str().unwrap().to_string();

    let mut identical = true;
    for run in ["a", "b"] {
        let out = dir.join(format!("data-{run}"));
        let status = run_cli(&["gen-data", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(status.status.success(), "gen-data failed: {status:?}");
    }
    identical &= read(&dir.join("data-a/tour.json")) == read(&dir.join("data-b/tour.json"));
    identical &= read(&dir.join("data-a/tour.raw")) == read(&dir.join("data-b/tour.raw"));

    for run in ["a", "b"] {
        let out = dir.join(format!("model-{run}"));
        let dataset = dir.join("data-a/tour.json");
        let status = run_cli(&[
            "train",
            "--config",
            &config,
            "--dataset",
            dataset.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success(), "train failed: {status:?}");
    }
    identical &= read(&dir.join("model-a/model.ckpt")) == read(&dir.join("model-b/model.ckpt"));
    identical &=
        read(&dir.join("model-a/loss_history.txt")) == read(&dir.join("model-b/loss_history.txt"));

    let elapsed = start.elapsed().as_secs_f64();
    std::fs::remove_dir_all(&dir).ok();
    report(
        10,
        "determinism",
        identical && elapsed < 720.0,
        &format!(
            "gen-data and train outputs byte-identical across two runs, {elapsed:.1}s"
        ),
    );
}

#[test]
fn gradient_check_against_demo_loss_landscape() {
    // Frozen-noise spot check on the full demo model, independent of the
    // randomized suite: a handful of coordinates, central differences.
    let demo = demo();
    let x = demo.dataset.image(5);
    let mut rng = SplitMix64::new(11);
    let mut eps = vec![0.0; 4];
    rng.fill_normal(&mut eps);
    let eps = vec![eps];

    let (_, analytic) =
        latentnav::vae::loss_and_grads(&demo.params, &[x], &eps).expect("loss runs");
    // Subsample: full finite differences over ~100k parameters would be slow.
    let config = demo.params.config().clone();
    let tensors = demo.params.tensors().to_vec();
    let mut probe_indices = Vec::new();
    for (t, tensor) in tensors.iter().enumerate() {
        probe_indices.push((t, 0));
        probe_indices.push((t, tensor.len() / 2));
    }
    for (t, k) in probe_indices {
        let mut work = tensors.clone();
        let h = 1e-5;
        let orig = work[t].data()[k];
        work[t].data_mut()[k] = orig + h;
        let plus = latentnav::vae::loss_and_grads(
            &ModelParams::from_tensors(config.clone(), work.clone()).unwrap(),
            &[x],
            &eps,
        )
        .unwrap()
        .0;
        work[t].data_mut()[k] = orig - h;
        let minus = latentnav::vae::loss_and_grads(
            &ModelParams::from_tensors(config.clone(), work.clone()).unwrap(),
            &[x],
            &eps,
        )
        .unwrap()
        .0;
        let fd = (plus - minus) / (2.0 * h);
        let a = analytic[t].data()[k];
        let denom = a.abs().max(fd.abs()).max(1e-4);
        assert!(
            ((a - fd) / denom).abs() < 1e-5,
            "tensor {t} elem {k}: analytic {a} vs fd {fd}"
        );
    }
}
