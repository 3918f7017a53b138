//! Per-pixel, per-triangle depth rasterization.
//!
//! For every pixel center and every triangle the three signed edge values
//! are evaluated; the pixel is covered when all are positive, or when every
//! zero value lies on a top edge (horizontal, pointing +x once the triangle
//! is positively oriented) or a left edge (pointing -y once positively
//! oriented). The interpolated depth is `sum(e_i * d_i) / |area|`.

fn signed(o: [f64; 2], q: [f64; 2], p: [f64; 2]) -> f64 {
    (q[0] - o[0]) * (p[1] - o[1]) - (q[1] - o[1]) * (p[0] - o[0])
}

fn covers(e: f64, from: [f64; 2], to: [f64; 2], orient: f64) -> bool {
    if e > 0.0 {
        return true;
    }
    if e < 0.0 {
        return false;
    }
    let dx = (to[0] - from[0]) * orient;
    let dy = (to[1] - from[1]) * orient;
    let top = dy == 0.0 && dx > 0.0;
    let left = dy < 0.0;
    top || left
}

/// Returns row-major depths with `0` for uncovered pixels.
pub fn rasterize(screen: &[[f64; 2]], depths: &[f64], faces: &[[u32; 3]], width: u32, height: u32) -> Vec<f32> {
    let mut out = Vec::with_capacity((width * height) as usize);
    for row in 0..height {
        for col in 0..width {
            let p = [col as f64 + 0.5, row as f64 + 0.5];
            let mut best: Option<f64> = None;
            for f in faces {
                let (a, b, c) = (screen[f[0] as usize], screen[f[1] as usize], screen[f[2] as usize]);
                let area = signed(a, b, c);
                if area == 0.0 {
                    continue;
                }
                let orient = if area < 0.0 { -1.0 } else { 1.0 };
                let e0 = signed(b, c, p) * orient;
                let e1 = signed(c, a, p) * orient;
                let e2 = signed(a, b, p) * orient;
                if !(covers(e0, b, c, orient) && covers(e1, c, a, orient) && covers(e2, a, b, orient)) {
                    continue;
                }
                let z = (e0 * depths[f[0] as usize] + e1 * depths[f[1] as usize] + e2 * depths[f[2] as usize])
                    / (area * orient);
                best = Some(match best {
                    Some(b) if b <= z => b,
                    _ => z,
                });
            }
            out.push(best.map_or(0.0, |z| z as f32));
        }
    }
    out
}

/// Whether `p` lies inside or on the convex hull of `points` (2D), with a
/// small absolute slack for rounding.
pub fn in_convex_hull(points: &[[f64; 2]], p: [f64; 2], slack: f64) -> bool {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        signed(a, b, p) >= -slack * len
    })
}

/// Andrew's monotone chain; counter-clockwise in a y-up frame.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && signed(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && signed(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
