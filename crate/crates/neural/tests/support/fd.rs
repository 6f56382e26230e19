use twoport_neural::model::{Architecture, Dims, Mode, Sample};
use twoport_neural::Token;

pub fn samples(arch: &Architecture) -> Vec<Sample<f64>> {
    let n = arch.input_len();
    let tok = |a, t, v| Token {
        alignment: a,
        ctype: t,
        value: v,
    };
    vec![
        Sample {
            spectrum: (0..n).map(|i| (i as f64 * 0.31).sin() * 0.8).collect(),
            tokens: vec![tok(0, 2, 1), tok(1, 0, 4)],
        },
        Sample {
            spectrum: (0..n).map(|i| ((i * i) as f64 * 0.017).cos() * 0.6).collect(),
            tokens: vec![tok(1, 1, 0), tok(1, 1, 3), tok(0, 2, 2)],
        },
    ]
}

pub fn loss(arch: &Architecture, theta: &[f64], data: &[Sample<f64>]) -> f64 {
    let refs: Vec<&Sample<f64>> = data.iter().collect();
    let (l, _) = arch.batch(theta, &refs, || true, None).unwrap();
    l.total() / data.len() as f64
}

/// Worst ratio of the gradient error to its allowance over every
/// parameter, and that worst ratio with no absolute floor.
pub fn check(mode: Mode) -> (f64, f64) {
    let arch = Architecture::new(Dims::test_scale(), mode).unwrap();
    let theta: Vec<f64> = arch.init(11);
    let data = samples(&arch);
    let refs: Vec<&Sample<f64>> = data.iter().collect();
    let mut grad = vec![0.0; theta.len()];
    arch.batch(&theta, &refs, || true, Some(&mut grad)).unwrap();
    let base = loss(&arch, &theta, &data);
    let mut worst: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut p = theta.clone();
    for i in 0..theta.len() {
        let h = 1e-6 * theta[i].abs().max(1.0);
        p[i] = theta[i] + h;
        let up = loss(&arch, &p, &data);
        p[i] = theta[i] - h;
        let down = loss(&arch, &p, &data);
        p[i] = theta[i];
        let fd = (up - down) / (2.0 * h);
        // rounding of the two loss values bounds what the quotient can resolve
        let noise = 4.0 * f64::EPSILON * base.abs() / h;
        let allowed = 1e-4 * fd.abs().max(grad[i].abs()) + noise;
        worst = worst.max((fd - grad[i]).abs() / allowed);
        worst_rel = worst_rel.max((fd - grad[i]).abs() / (1e-4 * fd.abs().max(grad[i].abs()).max(1e-300)));
    }
    (worst, worst_rel)
}

