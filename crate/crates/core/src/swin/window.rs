//! Window partitioning, shifted-window masks and relative position indices.

use swinct_tensor::Tensor;

use crate::error::{CoreError, Result};

/// Additive logit for token pairs that must not attend to each other.
pub const NEG: f64 = -100.0;

/// Region label of tokens that exist only because of padding.
pub const PAD_REGION: u8 = 9;

/// Splits `[B, h, w, D]` into `[B·nW, M², D]` windows, enumerated row-major
/// over the window grid with row-major tokens inside each window.
pub fn window_partition(x: &Tensor, m: usize) -> Result<Tensor> {
    let [b, h, w, d] = dims4(x, "window_partition")?;
    if m == 0 || h % m != 0 || w % m != 0 {
        return Err(CoreError::config(format!("grid {h}x{w} is not divisible by window {m}")));
    }
    let (gh, gw) = (h / m, w / m);
    let t = x.reshape(&[b, gh, m, gw, m, d])?.permute(&[0, 1, 3, 2, 4, 5])?;
    Ok(t.reshape(&[b * gh * gw, m * m, d])?)
}

/// Inverse of [`window_partition`].
pub fn window_reverse(windows: &Tensor, h: usize, w: usize, m: usize) -> Result<Tensor> {
    let shape = windows.shape();
    if shape.len() != 3 || m == 0 || !h.is_multiple_of(m) || !w.is_multiple_of(m) || shape[1] != m * m {
        return Err(CoreError::config(format!(
            "cannot reverse windows of shape {shape:?} into a {h}x{w} grid with window {m}"
        )));
    }
    let (gh, gw) = (h / m, w / m);
    if !shape[0].is_multiple_of(gh * gw) {
        return Err(CoreError::config(format!(
            "{} windows is not a multiple of the {gh}x{gw} window grid",
            shape[0]
        )));
    }
    let (b, d) = (shape[0] / (gh * gw), shape[2]);
    let t = windows.reshape(&[b, gh, gw, m, m, d])?.permute(&[0, 1, 3, 2, 4, 5])?;
    Ok(t.reshape(&[b, h, w, d])?)
}

pub(crate) fn dims4(x: &Tensor, op: &str) -> Result<[usize; 4]> {
    match *x.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        ref s => Err(CoreError::config(format!("{op} expects a [B, H, W, C] grid, got {s:?}"))),
    }
}

/// Shifted-window attention mask and the region labelling it was built from.
#[derive(Debug, Clone)]
pub struct AttentionMask {
    /// Number of window rows and columns.
    pub window_grid: (usize, usize),
    pub window: usize,
    /// `[nW, M², M²]`, 0 where attention is allowed and [`NEG`] elsewhere.
    pub mask: Tensor,
    /// Row-major region id of every token of the (cyclically shifted) grid.
    pub region_labels: Vec<u8>,
}

impl AttentionMask {
    /// Region labels of the tokens of window `w`, in window token order.
    pub fn window_labels(&self, w: usize) -> Vec<u8> {
        let (_, gw) = self.window_grid;
        let width = gw * self.window;
        let (wr, wc) = (w / gw, w % gw);
        let mut out = Vec::with_capacity(self.window * self.window);
        for i in 0..self.window {
            for j in 0..self.window {
                out.push(self.region_labels[(wr * self.window + i) * width + wc * self.window + j]);
            }
        }
        out
    }

    /// Number of distinct regions inside each window.
    pub fn regions_per_window(&self) -> Vec<usize> {
        let (gh, gw) = self.window_grid;
        (0..gh * gw)
            .map(|w| {
                let mut labels = self.window_labels(w);
                labels.sort_unstable();
                labels.dedup();
                labels.len()
            })
            .collect()
    }
}

/// Builds the shifted-window mask for an `h × w` grid with window `m` and
/// shift `s`.
///
/// Labels live in the shifted frame: rows split at `h − m` and `h − s`, and
/// columns likewise, giving up to nine regions. Two tokens in one window may
/// attend to each other only when their labels agree.
pub fn build_shift_mask(h: usize, w: usize, m: usize, s: usize) -> Result<AttentionMask> {
    if m == 0 || !h.is_multiple_of(m) || !w.is_multiple_of(m) {
        return Err(CoreError::config(format!("grid {h}x{w} is not divisible by window {m}")));
    }
    build_padded_mask(h, w, h, w, m, s)
}

/// Like [`build_shift_mask`] on a grid padded from `valid_h × valid_w` up to
/// `h × w`. Padding tokens get their own label so real tokens never see them.
pub fn build_padded_mask(
    h: usize,
    w: usize,
    valid_h: usize,
    valid_w: usize,
    m: usize,
    s: usize,
) -> Result<AttentionMask> {
    if s >= m {
        return Err(CoreError::config(format!("shift {s} must be smaller than window {m}")));
    }
    if m == 0 || !h.is_multiple_of(m) || !w.is_multiple_of(m) || valid_h > h || valid_w > w || valid_h == 0 || valid_w == 0 {
        return Err(CoreError::config(format!(
            "invalid mask geometry {valid_h}x{valid_w} in {h}x{w} with window {m}"
        )));
    }
    let band = |r: usize, n: usize| -> u8 {
        if r < n - m {
            0
        } else if r < n - s {
            1
        } else {
            2
        }
    };
    let mut labels = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            let (orig_r, orig_c) = ((r + s) % h, (c + s) % w);
            labels[r * w + c] = if orig_r >= valid_h || orig_c >= valid_w {
                PAD_REGION
            } else {
                band(r, h) * 3 + band(c, w)
            };
        }
    }

    let (gh, gw) = (h / m, w / m);
    let n = m * m;
    let mut mask = AttentionMask {
        window_grid: (gh, gw),
        window: m,
        mask: Tensor::scalar(0.0),
        region_labels: labels,
    };
    let mut data = Vec::with_capacity(gh * gw * n * n);
    for win in 0..gh * gw {
        let wl = mask.window_labels(win);
        for &li in &wl {
            data.extend(wl.iter().map(|&lj| if li == lj { 0.0 } else { NEG }));
        }
    }
    mask.mask = Tensor::from_vec(&[gh * gw, n, n], data)?;
    Ok(mask)
}

/// Table row for every ordered token pair of an `m × m` window, flattened
/// `[M², M²]`. The row depends only on the (Δrow, Δcol) offset.
pub fn relative_position_index(m: usize) -> Vec<usize> {
    let n = m * m;
    let span = 2 * m - 1;
    let mut index = Vec::with_capacity(n * n);
    for i in 0..n {
        let (ri, ci) = (i / m, i % m);
        for j in 0..n {
            let (rj, cj) = (j / m, j % m);
            index.push((ri + m - 1 - rj) * span + (ci + m - 1 - cj));
        }
    }
    index
}
