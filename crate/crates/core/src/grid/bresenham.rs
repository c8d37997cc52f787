use super::GridIndex;

/// Integer-error Bresenham trace from `from` to `to`, both endpoints included.
///
/// Along the major axis every column (or row) gets the pixel nearest to the
/// ideal line; exact half-way ties resolve toward the larger minor
/// coordinate. Because the tie rule is stated in absolute coordinates rather
/// than relative to the starting point, reversing the endpoints visits the
/// same cells in reverse order.
pub fn bresenham_trace(from: GridIndex, to: GridIndex) -> Vec<GridIndex> {
    let (x0, y0) = (from.a as i64, from.b as i64);
    let (x1, y1) = (to.a as i64, to.b as i64);
    let x_major = (x1 - x0).abs() >= (y1 - y0).abs();
    let cells = if x_major {
        trace_major(x0, y0, x1, y1)
    } else {
        trace_major(y0, x0, y1, x1)
            .into_iter()
            .map(|(u, v)| (v, u))
            .collect()
    };
    cells
        .into_iter()
        .map(|(a, b)| GridIndex::new(a as usize, b as usize))
        .collect()
}

/// Walks the major coordinate `u` from `u0` to `u1` and returns `(u, v)`
/// pairs, with `v` rounded half-up from the exact line.
fn trace_major(u0: i64, v0: i64, u1: i64, v1: i64) -> Vec<(i64, i64)> {
    // iterate in increasing u so the rounding rule is direction independent
    let reversed = u1 < u0;
    let (su, sv, eu, ev) = if reversed {
        (u1, v1, u0, v0)
    } else {
        (u0, v0, u1, v1)
    };
    let du = eu - su;
    let dv = (ev - sv).abs();
    let step = if ev >= sv { 1 } else { -1 };
    let mut out = Vec::with_capacity(du as usize + 1);
    if du == 0 {
        out.push((su, sv));
        return out;
    }

    // Offset k from sv after t steps:
    //   rising:  k = floor((2 dv t + du) / (2 du))
    //   falling: k = ceil((2 dv t - du) / (2 du))   (v = sv - k)
    // tracked incrementally with err = 2 dv t - 2 du k.
    let mut k = 0i64;
    let mut err = 0i64;
    let two_du = 2 * du;
    for t in 0..=du {
        if t > 0 {
            err += 2 * dv;
        }
        if step > 0 {
            while err + du >= two_du {
                err -= two_du;
                k += 1;
            }
        } else {
            while err - du > 0 {
                err -= two_du;
                k += 1;
            }
        }
        out.push((su + t, sv + step * k));
    }
    if reversed {
        out.reverse();
    }
    out
}
