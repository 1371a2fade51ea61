use std::cell::Cell;
use std::collections::{HashMap, HashSet};

use crate::tensor::Tensor;

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with graph recording disabled on this thread.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Post-order over nodes that require gradients, so reversing it gives an
/// order in which every node comes before all of its parents.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    let mut stack: Vec<(Tensor, usize)> = vec![(root.clone(), 0)];
    visited.insert(root.0.id);
    while let Some((node, next)) = stack.pop() {
        if next < node.0.parents.len() {
            let parent = node.0.parents[next].clone();
            stack.push((node, next + 1));
            if parent.requires_grad() && visited.insert(parent.0.id) {
                stack.push((parent, 0));
            }
        } else {
            order.push(node);
        }
    }
    order
}

pub(crate) fn backward(root: &Tensor) {
    if !root.requires_grad() {
        return;
    }
    let order = topo_order(root);
    let mut pending: HashMap<usize, Vec<f64>> = HashMap::new();
    pending.insert(root.0.id, vec![1.0]);
    for node in order.iter().rev() {
        let Some(grad) = pending.remove(&node.0.id) else {
            continue;
        };
        match &node.0.backward {
            None => node.accumulate_grad(&grad),
            Some(rule) => {
                let parent_grads = rule(&grad);
                debug_assert_eq!(parent_grads.len(), node.0.parents.len(), "{}", node.0.op);
                for (parent, pg) in node.0.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !parent.requires_grad() {
                        continue;
                    }
                    debug_assert_eq!(pg.len(), parent.numel(), "{}", node.0.op);
                    match pending.get_mut(&parent.0.id) {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                        None => {
                            pending.insert(parent.0.id, pg);
                        }
                    }
                }
            }
        }
    }
}
