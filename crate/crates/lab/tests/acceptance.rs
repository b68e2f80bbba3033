//! Acceptance suite: one PASS/FAIL line per criterion. `MFDIFF_ACCEPT=1,5`
//! restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use mfdiff::data::random_rotation;
use mfdiff::linalg::expm;
use mfdiff::losses::{loss_and_grad, tango_loss, LossBatch};
use mfdiff::manifold::{FullSpace, Hyperplane, Sphere, SpecialOrthogonal, TriangleMesh};
use mfdiff::metrics::{js_divergence, js_face_histogram, mmd, sliced_w1, w2, Bandwidth, SampleSet};
use mfdiff::net::FnField;
use mfdiff::noise::{sigma_det, sigma_inverse_apply_with};
use mfdiff::oracle::theorems::{verify_theorems, TheoremConfig};
use mfdiff::oracle::{riemannian_score_circle, CircleDensity, PlaneMixture};
use mfdiff::rng::stream;
use mfdiff::sampler::{langevin_at_fixed_time, reverse_sde_sample, SampleConfig};
use mfdiff::{Manifold, Method, NoiseSchedule, ScoreModel, TimeInput};
use mfdiff_lab::config::{preset, MetricName};
use mfdiff_lab::experiment::{build_manifold, generate_data, run_experiment};
use mfdiff_lab::report::Summary;
use mfdiff_lab::ExperimentConfig;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn theorem_check(names: &[&str]) -> Outcome {
    let r = verify_theorems(&TheoremConfig::default()).expect("theorem sweep");
    let picked: Vec<_> = r.checks.iter().filter(|c| names.contains(&c.name)).collect();
    assert_eq!(picked.len(), names.len(), "unknown check name");
    let detail = picked.iter().map(|c| format!("{} = {:.4} ({})", c.name, c.value, c.requirement)).collect::<Vec<_>>().join("; ");
    outcome(picked.iter().all(|c| c.pass), detail)
}

fn criterion_1() -> Outcome {
    theorem_check(&["iso normal slope", "iso normal fit R^2"])
}

fn criterion_2() -> Outcome {
    theorem_check(&["iso tangential exponent"])
}

fn criterion_3() -> Outcome {
    theorem_check(&["niso normal relative error", "niso tangential exponent"])
}

fn criterion_4() -> Outcome {
    // Every σ below c, so the whole batch is in the tangential branch.
    let c = 0.2;
    let schedule = NoiseSchedule::new(0.001, 0.19, 1.0).unwrap();
    let m = Manifold::Hyperplane(Hyperplane::coordinate(3, 2).unwrap());
    let mix = PlaneMixture::grid9();
    let mut rng = stream(4, "criterion", 0);
    let data: Vec<Vec<f64>> = mfdiff::data::sample_gmm_plane(&mix, 100_000, &mut rng);
    let idx: Vec<usize> = (0..data.len()).collect();
    let batch = LossBatch::draw(&data, &idx, Method::Tango { c }, false, &schedule, &m, &mut rng).unwrap();
    let b = batch.len();
    let truth = DMatrix::from_fn(3, b, |i, j| mix.score(batch.xt.column(j).as_slice(), batch.sigma[j], 0.0).unwrap()[i]);
    let base = tango_loss(&batch, &truth, &m, c).unwrap().loss;

    let mut worst_normal: f64 = 0.0;
    for k in 0..20 {
        let amp = 10f64.powi(k % 5) * rng.random::<f64>();
        let mut s = truth.clone();
        for j in 0..b {
            s[(2, j)] += amp * (rng.random::<f64>() - 0.5) * 1e3;
        }
        let l = tango_loss(&batch, &s, &m, c).unwrap().loss;
        worst_normal = worst_normal.max((l - base).abs() / base);
    }

    // Smooth tangential fields δ(x) = A x + b (in-plane part only), with RMS
    // comparable to the true score. Much smaller ones sit inside the batch's
    // sampling noise, where the analytic score is not the empirical minimizer.
    let mut improved = 0;
    let mut smallest_gain = f64::INFINITY;
    for _ in 0..20 {
        let a: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
        let bias = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
        let scale = 1.0 + 2.0 * rng.random::<f64>();
        let mut s = truth.clone();
        for j in 0..b {
            let x = batch.xt.column(j);
            s[(0, j)] += scale * (a[0] * x[0] + a[1] * x[1] + a[2] * x[2] + bias[0]);
            s[(1, j)] += scale * (a[3] * x[0] + a[4] * x[1] + a[5] * x[2] + bias[1]);
        }
        let l = tango_loss(&batch, &s, &m, c).unwrap().loss;
        smallest_gain = smallest_gain.min(l - base);
        if l < base {
            improved += 1;
        }
    }
    outcome(
        worst_normal <= 1e-10 && improved == 0,
        format!("normal perturbations change the loss by at most {worst_normal:.2e} (relative); {improved}/20 tangential perturbations improve it (smallest increase {smallest_gain:.3e})"),
    )
}

fn criterion_5() -> Outcome {
    // Reverse SDE on N(0, s² I) with the exact perturbed score.
    let s2 = 1.0;
    let schedule = NoiseSchedule::new(0.001, 3.0, 1.0).unwrap();
    let sched = schedule;
    let field = FnField::new(2, move |x: &[f64], t: f64| {
        let v = s2 + sched.sigma(t)?.powi(2);
        Ok(x.iter().map(|xi| -xi / v).collect())
    });
    let cfg = SampleConfig { steps: 500, langevin_steps: 0, step_size: 0.0, switch_sigma: 0.001, chains: 100_000, seed: 5 };
    let m = Manifold::FullSpace(FullSpace::new(2));
    let pts = reverse_sde_sample(&field, &m, &schedule, &cfg).unwrap();
    let var = pts.iter().flat_map(|p| p.iter().map(|v| v * v)).sum::<f64>() / (2 * pts.len()) as f64;
    let expected = s2 + 0.001f64.powi(2);
    let var_err = (var / expected - 1.0).abs();

    // Projected Langevin on the unit circle with the exact Riemannian score
    // of a von Mises density; reference draws by inverse CDF on a fine grid.
    let density = CircleDensity::VonMises { kappa: 1.0, mu: 0.3 };
    let circle = Manifold::Sphere(Sphere::unit(2).unwrap());
    let d = density.clone();
    let field = FnField::new(2, move |x: &[f64], _t: f64| riemannian_score_circle(x[1].atan2(x[0]), &d));
    let n = 10_000;
    let init: Vec<Vec<f64>> = (0..n).map(|i| {
        let th = 2.0 * PI * (i as f64 + 0.5) / n as f64;
        vec![th.cos(), th.sin()]
    }).collect();
    let gen = langevin_at_fixed_time(&field, &circle, &init, 0.0, 4000, 1e-3, 55).unwrap();
    let grid = 1 << 16;
    let h = 2.0 * PI / grid as f64;
    let mut cdf = Vec::with_capacity(grid);
    let mut acc = 0.0;
    for i in 0..grid {
        acc += density.unnormalized((i as f64 + 0.5) * h).unwrap();
        cdf.push(acc);
    }
    let mut rng = stream(5, "reference", 0);
    let reference: Vec<Vec<f64>> = (0..n).map(|_| {
        let u = rng.random::<f64>() * acc;
        let k = cdf.partition_point(|c| *c < u);
        let th = (k as f64 + rng.random::<f64>()) * h;
        vec![th.cos(), th.sin()]
    }).collect();
    let sw = sliced_w1(&SampleSet::new(&gen).unwrap(), &SampleSet::new(&reference).unwrap(), 128, &mut stream(5, "metric", 0)).unwrap();
    outcome(
        var_err <= 0.03 && sw <= 0.02,
        format!("reverse SDE terminal variance {var:.5} vs {expected:.5} (rel err {:.2}%); circle Langevin sliced-W1 {sw:.4}", 100.0 * var_err),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = stream(8, "criterion", 0);
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let manifolds = [
        Manifold::Hyperplane(Hyperplane::coordinate(3, 2).unwrap()),
        Manifold::Sphere(Sphere::unit(3).unwrap()),
        Manifold::SpecialOrthogonal(SpecialOrthogonal::new(3).unwrap()),
        Manifold::TriangleMesh(TriangleMesh::icosahedron()),
    ];
    for m in &manifolds {
        for _ in 0..50 {
            let n = m.ambient_dim();
            let x: Vec<f64> = match m {
                Manifold::SpecialOrthogonal(_) => SpecialOrthogonal::flatten(&random_rotation(3, &mut rng)),
                _ => m.project(&(0..n).map(|_| 3.0 * (rng.random::<f64>() - 0.5)).collect::<Vec<_>>()).unwrap(),
            };
            let p = m.projection_matrix(&x).unwrap();
            let pm = p.matrix();
            check((pm * pm - pm).norm() <= 1e-10, "projector idempotence");
            check((p.trace() - m.intrinsic_dim() as f64).abs() <= 1e-10, "projector trace");
            let sigma = 10f64.powf(-3.0 * rng.random::<f64>());
            let c = 0.9 * rng.random::<f64>();
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let w = DVector::from_vec(sigma_inverse_apply_with(&p, sigma, c, &v).unwrap());
            let dense = DMatrix::identity(n, n) * sigma * sigma + (DMatrix::identity(n, n) - pm) * c * c;
            let v = DVector::from_vec(v);
            check((&dense * &w - &v).norm() <= 1e-9 * (1.0 + v.norm()), "SMW inverse identity");
            let det = sigma_det(sigma, c, n, m.intrinsic_dim()).unwrap();
            let dd = dense.clone().lu().determinant();
            check((det.det - dd).abs() <= 1e-8 * dd.abs(), "determinant");
        }
    }
    let mesh = TriangleMesh::icosahedron();
    let mm = Manifold::TriangleMesh(mesh.clone());
    for _ in 0..2000 {
        let x: Vec<f64> = (0..3).map(|_| 4.0 * (rng.random::<f64>() - 0.5)).collect();
        let once = mm.project(&x).unwrap();
        let twice = mm.project(&once).unwrap();
        check(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() <= 1e-12), "mesh projection idempotence");
        let fast = mesh.closest_point(&x);
        let slow = mesh.closest_point_brute_force(&x);
        check(fast.face == slow.face && (fast.dist2 - slow.dist2).abs() <= 1e-12, "mesh BVH vs brute force");
    }

    // Parameter gradient against central differences.
    let schedule = NoiseSchedule::new(0.001, 3.0, 1.0).unwrap();
    let plane = Manifold::Hyperplane(Hyperplane::coordinate(3, 2).unwrap());
    let data = mfdiff::data::sample_gmm_plane(&PlaneMixture::grid9(), 32, &mut rng);
    let idx: Vec<usize> = (0..32).collect();
    let mut worst_grad: f64 = 0.0;
    for method in [Method::Iso, Method::Niso { c: 0.2 }, Method::Tango { c: 0.2 }] {
        let model = ScoreModel::new(3, 16, 2, method, true, TimeInput::Time, schedule, &mut rng).unwrap();
        let batch = LossBatch::draw(&data, &idx, method, true, &schedule, &plane, &mut rng).unwrap();
        let (_, grad) = loss_and_grad(&model, &batch, &plane).unwrap();
        for _ in 0..20 {
            let k = rng.random_range(0..model.num_params());
            let h = 1e-6 * (1.0 + model.params()[k].abs());
            let mut p = model.params().to_vec();
            p[k] += h;
            let up = loss_and_grad(&model.with_params(p.clone()).unwrap(), &batch, &plane).unwrap().0;
            p[k] -= 2.0 * h;
            let down = loss_and_grad(&model.with_params(p).unwrap(), &batch, &plane).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
            worst_grad = worst_grad.max((fd - grad[k]).abs() / (grad[k].abs() + 1e-3 * scale));
        }
    }
    check(worst_grad <= 1e-4, "gradient vs finite differences");

    // Metric axioms and the one-dimensional W2 oracle.
    for _ in 0..10 {
        let x = SampleSet::new(&pts(&mut rng, 50)).unwrap();
        let y = SampleSet::new(&pts(&mut rng, 50)).unwrap();
        let bw = Bandwidth::Fixed(0.5);
        check(mmd(&x, &x, bw).unwrap().mmd == 0.0, "MMD zero on identical sets");
        check(mmd(&x, &y, bw).unwrap().mmd == mmd(&y, &x, bw).unwrap().mmd, "MMD symmetry");
        check(sliced_w1(&x, &x, 16, &mut stream(1, "m", 0)).unwrap() == 0.0, "sliced W1 zero");
        let a = sliced_w1(&x, &y, 16, &mut stream(1, "m", 0)).unwrap();
        let b = sliced_w1(&y, &x, 16, &mut stream(1, "m", 0)).unwrap();
        check((a - b).abs() <= 1e-15, "sliced W1 symmetry");
        check(w2(&x, &x).unwrap() == 0.0, "W2 zero");
        let p: Vec<usize> = (0..20).map(|_| rng.random_range(0..9)).collect();
        let q: Vec<usize> = (0..20).map(|_| rng.random_range(0..9)).collect();
        check(js_divergence(&p, &q).unwrap() == js_divergence(&q, &p).unwrap(), "JS symmetry");
        let mut a1: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let mut b1: Vec<f64> = (0..40).map(|_| 2.0 * rng.random::<f64>()).collect();
        let got = w2(&SampleSet::new(&a1.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap(), &SampleSet::new(&b1.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap()).unwrap();
        a1.sort_by(f64::total_cmp);
        b1.sort_by(f64::total_cmp);
        let oracle = (a1.iter().zip(&b1).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / 40.0).sqrt();
        check((got - oracle).abs() <= 1e-12, "W2 one-dimensional oracle");
    }
    // Matrix exponential of a rotation generator.
    let a = DMatrix::from_row_slice(2, 2, &[0.0, -0.7, 0.7, 0.0]);
    let q = expm(&a);
    check((q[(0, 0)] - 0.7f64.cos()).abs() <= 1e-14 && (q[(1, 0)] - 0.7f64.sin()).abs() <= 1e-14, "expm rotation");

    failures.sort();
    failures.dedup();
    let detail = if failures.is_empty() {
        format!("all identities hold; worst gradient relative error {worst_grad:.2e}")
    } else {
        format!("failed: {}", failures.join(", "))
    };
    outcome(failures.is_empty(), detail)
}

fn pts<R: Rng>(rng: &mut R, k: usize) -> Vec<Vec<f64>> {
    (0..k).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect()
}

fn median_metric(cfg: &ExperimentConfig, metric: MetricName) -> (f64, Vec<f64>) {
    let r = run_experiment(cfg, None).expect("experiment");
    let v = r.values(metric);
    (Summary::of(&v).median, v)
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

fn criterion_6() -> Outcome {
    let base = preset("hyperplane-desk").unwrap();
    let run = |sets: &[&str]| median_metric(&base.with_overrides(sets).unwrap(), MetricName::Mmd);
    let (iso, iso_v) = run(&["method = iso"]);
    let (niso, niso_v) = run(&["method = niso"]);
    // Annealing runs are compared with each other on 2000 samples each.
    let ann = ["sampler = annealing", "switch_sigma = 0.2", "num_samples = 2000"];
    let (iso_a, iso_a_v) = run(&[&["method = iso"][..], &ann[..]].concat());
    let (tango, tango_v) = run(&[&["method = tango"][..], &ann[..]].concat());
    outcome(
        niso < iso && tango < iso_a,
        format!(
            "median MMD, reverse: Iso+res {iso:.4} [{}], Niso+res {niso:.4} [{}]; annealing: Iso+res {iso_a:.4} [{}], Tango+res {tango:.4} [{}]",
            fmt_values(&iso_v),
            fmt_values(&niso_v),
            fmt_values(&iso_a_v),
            fmt_values(&tango_v)
        ),
    )
}

fn criterion_7() -> Outcome {
    let base = preset("so3-desk").unwrap();
    let run = |sets: &[&str]| median_metric(&base.with_overrides(sets).unwrap(), MetricName::SlicedW1);
    let (iso, iso_v) = run(&["method = iso"]);
    let (niso, niso_v) = run(&["method = niso"]);
    outcome(
        niso <= iso,
        format!("median sliced-W1: Iso+res {iso:.4} [{}]; Niso+res {niso:.4} [{}]", fmt_values(&iso_v), fmt_values(&niso_v)),
    )
}

fn criterion_9() -> Outcome {
    let cfg = preset("icosahedron-desk").unwrap();
    let r = run_experiment(&cfg, None).expect("experiment");
    let js_v = r.values(MetricName::JsFaces);
    let js = Summary::of(&js_v).median;
    // Noise floor: mean JS over disjoint pairs of target halves of the held-out size.
    let m = build_manifold(&cfg).unwrap();
    let Manifold::TriangleMesh(mesh) = &m else { unreachable!() };
    let n_test = cfg.dataset_size / 5;
    let pairs = 16;
    let floor_cfg = ExperimentConfig { dataset_size: 2 * n_test * pairs, ..cfg.clone() };
    let data = generate_data(&floor_cfg, &m, mfdiff::rng::derive_seed(cfg.seeds[0], "floor", 0)).unwrap();
    let floors: Vec<f64> = data
        .points
        .chunks(2 * n_test)
        .map(|c| {
            let (a, b) = c.split_at(n_test);
            js_face_histogram(mesh, &SampleSet::new(a).unwrap(), &SampleSet::new(b).unwrap()).unwrap()
        })
        .collect();
    let floor = floors.iter().sum::<f64>() / pairs as f64;
    outcome(
        js <= 2.0 * floor,
        format!("median JS(generated, held-out) {js:.5} [{}]; JS between target halves {floor:.5} (mean of {pairs}); bound {:.5}", fmt_values(&js_v), 2.0 * floor),
    )
}

// Criteria that fail at desk scale; see the notes. A change in either
// direction fails the run so the list stays current.
const KNOWN_FAILURES: &[usize] = &[9];

fn main() {
    let only: Option<Vec<usize>> = std::env::var("MFDIFF_ACCEPT").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "normal score scales as sigma^-2", criterion_1),
        (2, "tangential score converges", criterion_2),
        (3, "fixed-c normal score saturates", criterion_3),
        (4, "Tango minimizer property", criterion_4),
        (5, "exact-score sampler calibration", criterion_5),
        (6, "hyperplane method ordering", criterion_6),
        (7, "SO(3) method ordering", criterion_7),
        (8, "algebraic property suite", criterion_8),
        (9, "mesh pipeline smoke test", criterion_9),
    ];
    let mut failed = Vec::new();
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        println!("criterion {id} ({name}): {} in {:.1}s: {}", if o.pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failed.push(id);
        }
        if o.pass == KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failing criteria: {failed:?} (known: {KNOWN_FAILURES:?})");
    }
    if !unexpected.is_empty() {
        println!("status differs from the known-failure list: {unexpected:?}");
        std::process::exit(1);
    }
}
