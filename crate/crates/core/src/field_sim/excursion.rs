//! Euler characteristic of excursion sets `{f >= u}` on grids.

/// Number of maximal runs of consecutive samples with `value >= u`.
pub fn excursion_ec_1d(values: &[f64], u: f64) -> i64 {
    let mut runs = 0;
    let mut inside = false;
    for v in values {
        let now = *v >= u;
        if now && !inside {
            runs += 1;
        }
        inside = now;
    }
    runs
}

/// `V - E + F` of the cubical complex spanned by grid points with `value >= u`: vertices are
/// points, edges join horizontally or vertically adjacent points, faces are full 2x2 blocks.
/// `values` is row-major `nx * ny`.
pub fn excursion_ec_2d(values: &[f64], nx: usize, ny: usize, u: f64) -> i64 {
    assert_eq!(values.len(), nx * ny, "values must be nx * ny");
    let above = |i: usize, j: usize| values[i * ny + j] >= u;
    let mut chi = 0i64;
    for i in 0..nx {
        for j in 0..ny {
            if !above(i, j) {
                continue;
            }
            chi += 1;
            let right = j + 1 < ny && above(i, j + 1);
            let down = i + 1 < nx && above(i + 1, j);
            chi -= right as i64 + down as i64;
            if right && down && above(i + 1, j + 1) {
                chi += 1;
            }
        }
    }
    chi
}

/// Maximum over the grid; NaN if `values` is empty.
pub fn sup_on_grid(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::NAN, f64::max)
}
