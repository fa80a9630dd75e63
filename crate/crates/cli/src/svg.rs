use std::fmt::Write as _;

const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn color(s: f64) -> String {
    let s = s.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (s.floor() as usize).min(STOPS.len() - 2);
    let w = s - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| ((1.0 - w) * STOPS[i][k] + w * STOPS[i + 1][k]).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Heatmap of `(x, z, value)` samples on a tensor grid, one rectangle per
/// sample. `None` when the samples do not form a full grid.
pub fn heatmap_svg(samples: &[(f64, f64, f64)], title: &str) -> Option<String> {
    let uniq = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
        let mut v: Vec<f64> = samples.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let xs = uniq(&|s| s.0);
    let zs = uniq(&|s| s.1);
    if samples.is_empty() || xs.len() * zs.len() != samples.len() {
        return None;
    }
    let lo = samples.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (cw, ch, pad, top) = (24.0, 24.0, 10.0, 30.0);
    let width = pad * 2.0 + cw * xs.len() as f64;
    let height = top + pad * 2.0 + ch * zs.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="18" font-family="sans-serif" font-size="12">{title} [{lo:.3e}, {hi:.3e}]</text>"#
    );
    for &(x, z, v) in samples {
        let i = xs.iter().position(|&a| a == x).expect("listed");
        let j = zs.iter().position(|&a| a == z).expect("listed");
        // z grows upwards.
        let px = pad + cw * i as f64;
        let py = top + pad + ch * (zs.len() - 1 - j) as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{px}" y="{py}" width="{cw}" height="{ch}" fill="{}"/>"#,
            color((v - lo) / span)
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}
