#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use random_machines::{KernelKind, KernelSpec, Label};

/// Kernel value computed from the textbook formulas, independent of the
/// library's evaluator.
pub fn kernel(kind: KernelKind, gamma: f64, degree: u32, x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    match kind {
        KernelKind::Linear => gamma * dot,
        KernelKind::Polynomial => (gamma * dot).powi(degree as i32),
        KernelKind::Gaussian => (-gamma * sq).exp(),
        KernelKind::Laplacian => (-gamma * sq.sqrt()).exp(),
    }
}

pub fn q_matrix(spec: &KernelSpec, x: &[Vec<f64>], y: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| y[i] * y[j] * kernel(spec.kind(), spec.gamma(), spec.degree(), &x[i], &x[j]))
                .collect()
        })
        .collect()
}

pub fn dual_value(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let mut quad = 0.0;
    for (i, row) in q.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            quad += alpha[i] * v * alpha[j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto {0 ≤ α ≤ C, yᵀα = 0} by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect() };
    let g = |mu: f64| -> f64 { at(mu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    while hi - lo > 1e-15 * span {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximizes the SVM dual with accelerated projected gradient (FISTA with
/// adaptive restart). Returns (α, W(α)).
pub fn dual_oracle(spec: &KernelSpec, x: &[Vec<f64>], labels: &[Label], c: f64) -> (Vec<f64>, f64) {
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let q = q_matrix(spec, x, &y);
    let n = y.len();
    // Lipschitz constant: Frobenius norm bounds the spectral norm
    let lip = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let step = 1.0 / lip;
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| 1.0 - q[i].iter().zip(a).map(|(qij, aj)| qij * aj).sum::<f64>())
            .collect()
    };
    let mut alpha = vec![0.0; n];
    let mut z = alpha.clone();
    let mut t = 1.0f64;
    let mut best = dual_value(&q, &alpha);
    let mut checkpoint = best;
    for it in 1..=60_000 {
        if it % 250 == 0 {
            if best - checkpoint <= 1e-14 * best.abs().max(1.0) {
                break;
            }
            checkpoint = best;
        }
        let gz = grad(&z);
        let next = project(&z.iter().zip(&gz).map(|(zi, gi)| zi + step * gi).collect::<Vec<_>>(), &y, c);
        let value = dual_value(&q, &next);
        if value < best {
            // restart momentum
            t = 1.0;
            z = alpha.clone();
            continue;
        }
        best = value;
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = next
            .iter()
            .zip(&alpha)
            .map(|(a, prev)| a + (t - 1.0) / t_next * (a - prev))
            .collect();
        alpha = next;
        t = t_next;
    }
    (alpha, best)
}

pub fn random_problem(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let mut labels: Vec<Label> = (0..n)
        .map(|_| if rng.gen_bool(0.5) { Label::Positive } else { Label::Negative })
        .collect();
    labels[0] = Label::Positive;
    labels[1] = Label::Negative;
    (x, labels)
}

pub fn to_array(x: &[Vec<f64>]) -> ndarray::Array2<f64> {
    let p = x[0].len();
    ndarray::Array2::from_shape_vec((x.len(), p), x.iter().flatten().copied().collect()).unwrap()
}

/// 20 points in the plane split by the line x₁ + x₂ = 0 with a gap.
pub fn separable_set() -> (Vec<Vec<f64>>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    let mut x = Vec::new();
    let mut labels = Vec::new();
    while x.len() < 20 {
        let p = vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let s: f64 = p[0] + p[1];
        if s.abs() < 0.8 {
            continue;
        }
        labels.push(if s > 0.0 { Label::Positive } else { Label::Negative });
        x.push(p);
    }
    (x, labels)
}

pub struct OracleCase {
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub spec: KernelSpec,
    pub cost: f64,
}

/// 25 random problems (n ≤ 30, p ≤ 3) for each of the four kernels.
pub fn oracle_cases() -> Vec<OracleCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut cases = Vec::new();
    for k in 0..25u64 {
        let n = rng.gen_range(8..=30);
        let p = rng.gen_range(1..=3);
        let cost = [0.1, 1.0, 10.0][rng.gen_range(0..3)];
        let gamma = [0.5, 1.0, 2.0][rng.gen_range(0..3)];
        let (x, labels) = random_problem(1000 + k, n, p);
        for kind in KernelKind::ALL {
            let spec = KernelSpec::new(kind, gamma, 2).unwrap();
            cases.push(OracleCase { x: x.clone(), labels: labels.clone(), spec, cost });
        }
    }
    cases
}

/// Relative gap between the solver's and the oracle's dual objective.
pub fn oracle_gap(case: &OracleCase) -> (f64, f64, f64) {
    let settings = random_machines::SolverSettings::with_cost(case.cost);
    let model = random_machines::train_svm(to_array(&case.x).view(), &case.labels, &case.spec, &settings).unwrap();
    let (_, best) = dual_oracle(&case.spec, &case.x, &case.labels, case.cost);
    let w = model.dual_objective();
    ((w - best).abs() / best.abs().max(1e-12), w, best)
}
