//! Quadratic/linear Lagrange shape functions on triangles and the
//! degree-4 six-point quadrature rule.

/// Barycentric quadrature points and weights (weights sum to 1).
pub const QUAD_POINTS: [[f64; 3]; 6] = {
    const A1: f64 = 0.445_948_490_915_965;
    const B1: f64 = 1.0 - 2.0 * A1;
    const A2: f64 = 0.091_576_213_509_771;
    const B2: f64 = 1.0 - 2.0 * A2;
    [
        [B1, A1, A1],
        [A1, B1, A1],
        [A1, A1, B1],
        [B2, A2, A2],
        [A2, B2, A2],
        [A2, A2, B2],
    ]
};
pub const QUAD_WEIGHTS: [f64; 6] = [
    0.223_381_589_678_011,
    0.223_381_589_678_011,
    0.223_381_589_678_011,
    0.109_951_743_655_322,
    0.109_951_743_655_322,
    0.109_951_743_655_322,
];

/// Edge rule: three-point Gauss–Legendre on [0, 1].
pub const EDGE_POINTS: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
pub const EDGE_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Geometry of a straight triangle: area and the constant barycentric gradients.
#[derive(Debug, Clone, Copy)]
pub struct TriGeom {
    pub area: f64,
    pub grad_l: [[f64; 2]; 3],
}

impl TriGeom {
    pub fn new(v: [[f64; 2]; 3]) -> Self {
        let [a, b, c] = v;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let grad_l = [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ];
        Self { area: 0.5 * det, grad_l }
    }
}

pub fn p1_values(l: [f64; 3]) -> [f64; 3] {
    l
}

pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

pub fn p2_gradients(l: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        for d in 0..2 {
            out[i][d] = (4.0 * l[i] - 1.0) * g[i][d];
        }
    }
    for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
        for d in 0..2 {
            out[3 + k][d] = 4.0 * (l[i] * g[j][d] + l[j] * g[i][d]);
        }
    }
    out
}

/// P2 values along an edge parameterized by `s ∈ [0, 1]` from its first to second
/// vertex: `[start, end, midpoint]`.
pub fn p2_edge_values(s: f64) -> [f64; 3] {
    [(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_integrates_quartics_exactly() {
        assert!((QUAD_WEIGHTS.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // ∫_T L1^a L2^b L3^c = 2|T| a! b! c! / (a+b+c+2)!
        let fact = |n: u32| (1..=n).product::<u32>().max(1) as f64;
        for (a, b, c) in [(4, 0, 0), (2, 2, 0), (1, 1, 2), (3, 1, 0), (0, 0, 0), (2, 1, 1)] {
            let q: f64 = QUAD_POINTS
                .iter()
                .zip(QUAD_WEIGHTS)
                .map(|(l, w)| w * l[0].powi(a) * l[1].powi(b) * l[2].powi(c))
                .sum();
            let exact = 2.0 * fact(a as u32) * fact(b as u32) * fact(c as u32) / fact((a + b + c + 2) as u32);
            assert!((q - exact).abs() < 1e-12, "{a}{b}{c}: {q} vs {exact}");
        }
    }

    #[test]
    fn p2_partition_of_unity_and_gradients() {
        let geom = TriGeom::new([[0.1, 0.0], [1.0, 0.2], [0.3, 0.9]]);
        for l in QUAD_POINTS {
            let v = p2_values(l);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let g = p2_gradients(l, &geom.grad_l);
            for d in 0..2 {
                assert!(g.iter().map(|gi| gi[d]).sum::<f64>().abs() < 1e-13);
            }
        }
    }

    #[test]
    fn p2_gradient_matches_finite_difference() {
        let verts = [[0.1, 0.0], [1.0, 0.2], [0.3, 0.9]];
        let geom = TriGeom::new(verts);
        let to_bary = |p: [f64; 2]| {
            let [a, b, c] = verts;
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
            let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
            [1.0 - l1 - l2, l1, l2]
        };
        let p = [0.45, 0.35];
        let g = p2_gradients(to_bary(p), &geom.grad_l);
        let h = 1e-6;
        for d in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[d] += h;
            pm[d] -= h;
            let (vp, vm) = (p2_values(to_bary(pp)), p2_values(to_bary(pm)));
            for i in 0..6 {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((fd - g[i][d]).abs() < 1e-7);
            }
        }
    }
}
