use super::{split_axis, strides};
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Gathers `data` (row-major, `shape`) into the axis order `perm`.
fn permute_data(data: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    if rank == 0 {
        out.push(data[0]);
        return out;
    }
    let last = rank - 1;
    let (inner_len, inner_stride) = (out_shape[last], src_strides[last]);
    let mut idx = vec![0usize; rank];
    let mut base = 0usize;
    loop {
        if inner_stride == 1 {
            out.extend_from_slice(&data[base..base + inner_len]);
        } else {
            out.extend((0..inner_len).map(|i| data[base + i * inner_stride]));
        }
        // advance the odometer over all but the last axis
        let mut a = last;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            idx[a] += 1;
            base += src_strides[a];
            if idx[a] < out_shape[a] {
                break;
            }
            base -= src_strides[a] * out_shape[a];
            idx[a] = 0;
        }
    }
}

impl Tensor {
    /// Same data, new shape with an equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(TensorError::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op("reshape", shape.to_vec(), self.to_vec(), &[self], |g| {
            vec![Some(g.to_vec())]
        }))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::invalid("permute", format!("{perm:?} is not a permutation of {rank} axes")));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape()[p]).collect();
        let out = permute_data(self.data(), self.shape(), perm);
        let mut inverse = vec![0; rank];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let grad_shape = out_shape.clone();
        Ok(Tensor::from_op("permute", out_shape, out, &[self], move |g| {
            vec![Some(permute_data(g, &grad_shape, &inverse))]
        }))
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&self) -> Result<Tensor> {
        let r = self.rank();
        if r < 2 {
            return Err(TensorError::invalid("transpose_last", "rank < 2"));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(&perm)
    }

    /// Sub-range `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || start + len > self.shape()[axis] {
            return Err(TensorError::invalid(
                "narrow",
                format!("range {start}..{} on axis {axis} of {:?}", start + len, self.shape()),
            ));
        }
        let (outer, full, inner) = split_axis(self.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&self.data()[(o * full + start) * inner..][..len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op("narrow", shape, out, &[self], move |g| {
            let mut gx = vec![0.0; outer * full * inner];
            for o in 0..outer {
                gx[(o * full + start) * inner..][..len * inner].copy_from_slice(&g[o * len * inner..][..len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(tensors: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = tensors.first().ok_or_else(|| TensorError::invalid("concat", "no inputs"))?;
        if axis >= first.rank() {
            return Err(TensorError::invalid("concat", format!("axis {axis} out of range")));
        }
        for t in tensors {
            let ok = t.rank() == first.rank()
                && t.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(TensorError::shape("concat", first.shape(), t.shape()));
            }
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let lens: Vec<usize> = tensors.iter().map(|t| t.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (t, &l) in tensors.iter().zip(&lens) {
                out.extend_from_slice(&t.data()[o * l * inner..][..l * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let parents: Vec<&Tensor> = tensors.iter().collect();
        Ok(Tensor::from_op("concat", shape, out, &parents, move |g| {
            let mut grads: Vec<Vec<f64>> = lens.iter().map(|l| Vec::with_capacity(outer * l * inner)).collect();
            for o in 0..outer {
                let mut off = o * total * inner;
                for (gi, &l) in grads.iter_mut().zip(&lens) {
                    gi.extend_from_slice(&g[off..off + l * inner]);
                    off += l * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }

    /// Cyclic shift along `axis`: `out[(i + shift) mod n] = x[i]`.
    /// A negative shift moves elements towards lower indices.
    pub fn roll(&self, axis: usize, shift: isize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(TensorError::invalid("roll", format!("axis {axis} out of range for {:?}", self.shape())));
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        if len == 0 {
            return Ok(self.clone());
        }
        let s = shift.rem_euclid(len as isize) as usize;
        let roll = move |src: &[f64], s: usize| {
            let mut out = vec![0.0; src.len()];
            for o in 0..outer {
                for l in 0..len {
                    let dst = (l + s) % len;
                    out[(o * len + dst) * inner..][..inner].copy_from_slice(&src[(o * len + l) * inner..][..inner]);
                }
            }
            out
        };
        let out = roll(self.data(), s);
        Ok(Tensor::from_op("roll", self.shape().to_vec(), out, &[self], move |g| {
            vec![Some(roll(g, (len - s) % len))]
        }))
    }

    /// Appends `before`/`after` zero slabs along `axis`.
    pub fn pad_zeros(&self, axis: usize, before: usize, after: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(TensorError::invalid("pad_zeros", format!("axis {axis} out of range")));
        }
        if before == 0 && after == 0 {
            return Ok(self.clone());
        }
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let full = before + len + after;
        let mut out = vec![0.0; outer * full * inner];
        for o in 0..outer {
            out[(o * full + before) * inner..][..len * inner].copy_from_slice(&self.data()[o * len * inner..][..len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = full;
        Ok(Tensor::from_op("pad_zeros", shape, out, &[self], move |g| {
            let mut gx = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                gx.extend_from_slice(&g[(o * full + before) * inner..][..len * inner]);
            }
            vec![Some(gx)]
        }))
    }
}
