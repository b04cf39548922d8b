//! One-dimensional quadrature rules.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// 15-point Kronrod estimate on `[a, b]` and its distance to the embedded
/// 7-point Gauss estimate.
pub fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integration: bisects the panel with the largest
/// error estimate until the total estimate is below `max(abs_tol, rel_tol |I|)`.
pub fn adaptive(mut f: impl FnMut(f64) -> f64, breaks: &[f64], rel_tol: f64, abs_tol: f64) -> f64 {
    let mut panels: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    for _ in 0..4000 {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let worst = (0..panels.len()).max_by(|i, j| panels[*i].3.total_cmp(&panels[*j].3)).unwrap();
        let (a, b, _, _) = panels[worst];
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let (v1, e1) = gk15(&mut f, a, m);
        let (v2, e2) = gk15(&mut f, m, b);
        panels[worst] = (a, m, v1, e1);
        panels.push((m, b, v2, e2));
    }
    panels.iter().map(|p| p.2).sum()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule with `points` nodes on each panel.
pub fn composite_nodes(breaks: &[f64], points: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(points);
    breaks
        .windows(2)
        .flat_map(|p| {
            let (c, h) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
            x.iter().zip(&w).map(move |(xi, wi)| (c + h * xi, h * wi)).collect::<Vec<_>>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for n in [1usize, 2, 5, 10, 20] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
                assert!((q - exact).abs() < 1e-12, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn kronrod_exact_on_low_degree() {
        let (v, _) = gk15(&mut |x: f64| x.powi(20), 0.0, 1.0);
        assert!((v - 1.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let v = adaptive(|x: f64| x.abs().sqrt(), &[-1.0, 1.0], 1e-10, 0.0);
        assert!((v - 4.0 / 3.0).abs() < 1e-9);
        let v = adaptive(|x: f64| (-x * x).exp(), &[-12.0, 12.0], 1e-12, 0.0);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn composite_rule() {
        let q: f64 = composite_nodes(&[0.0, 0.5, 2.0], 6).iter().map(|(x, w)| w * x.exp()).sum();
        assert!((q - (2f64.exp() - 1.0)).abs() < 1e-12);
    }
}
