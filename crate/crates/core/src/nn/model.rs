use std::collections::HashMap;

use super::layers::{conv_backward, conv_forward, dense_backward, dense_forward, dropout_apply, Activation};
use super::{LayerSpec, NnError, ParamSet, Real, SeededRng, Tensor};
use crate::arch::{NetworkGraph, Stack, Topology};
use crate::dataio::Window;

enum Saved<T> {
    Conv { input: Tensor<T>, output: Tensor<T> },
    Flatten { shape: Vec<usize> },
    Dense { input: Tensor<T>, output: Tensor<T> },
    Dropout { mask: Option<Vec<T>> },
    Output { input: Tensor<T> },
}

/// Activations saved by [`forward_train`] for one batch.
pub struct Cache<T> {
    stacks: Vec<Vec<Saved<T>>>,
    branch_widths: Vec<usize>,
}

/// Stacks a set of windows into a `[B, W, D]` input tensor.
pub fn batch_input<T: Real>(windows: &[Window], idx: &[usize]) -> Result<Tensor<T>, NnError> {
    let first = idx.first().map(|&i| &windows[i]).ok_or_else(|| NnError::EmptyData("empty batch".into()))?;
    let (w, d) = (first.window_len, first.channels);
    let mut data = Vec::with_capacity(idx.len() * w * d);
    for &i in idx {
        let win = &windows[i];
        if win.window_len != w || win.channels != d {
            return Err(NnError::Shape(format!(
                "window {i} is [{}, {}], batch is [{w}, {d}]",
                win.window_len, win.channels
            )));
        }
        data.extend(win.values.iter().map(|&v| T::of(v)));
    }
    Tensor::from_vec(&[idx.len(), w, d], data)
}

fn param<'a, T: Real>(
    params: &'a ParamSet<T>,
    prefix: &str,
    layer: &str,
    which: &str,
) -> Result<&'a Tensor<T>, NnError> {
    params.get(&format!("{prefix}{layer}.{which}"))
}

fn stack_forward<T: Real>(
    stack: &Stack<'_>,
    params: &ParamSet<T>,
    mut x: Tensor<T>,
    rng: &mut Option<&mut SeededRng>,
    mut saved: Option<&mut Vec<Saved<T>>>,
) -> Result<Tensor<T>, NnError> {
    for l in stack.layers {
        let name = format!("{}{}", stack.prefix, l.name);
        let (y, s) = match &l.spec {
            LayerSpec::TemporalConv { activation, .. } => {
                let w = param(params, &stack.prefix, &l.name, "W")?;
                let b = param(params, &stack.prefix, &l.name, "b")?;
                let y = conv_forward(&x, w, b, *activation, &name)?;
                (y.clone(), Saved::Conv { input: x, output: y })
            }
            LayerSpec::Flatten => {
                let shape = x.shape().to_vec();
                let flat = shape[1..].iter().product();
                (x.reshape(&[shape[0], flat])?, Saved::Flatten { shape })
            }
            LayerSpec::Dense { activation, .. } => {
                let w = param(params, &stack.prefix, &l.name, "W")?;
                let b = param(params, &stack.prefix, &l.name, "b")?;
                let y = dense_forward(&x, w, b, *activation, &name)?;
                (y.clone(), Saved::Dense { input: x, output: y })
            }
            LayerSpec::Dropout { p } => match rng.as_deref_mut() {
                Some(r) => {
                    let (y, mask) = dropout_apply(&x, *p, r, true)?;
                    (y, Saved::Dropout { mask: Some(mask) })
                }
                None => (x, Saved::Dropout { mask: None }),
            },
            LayerSpec::SoftmaxOutput { .. } => {
                let w = param(params, &stack.prefix, &l.name, "W")?;
                let b = param(params, &stack.prefix, &l.name, "b")?;
                let y = dense_forward(&x, w, b, Activation::None, &name)?;
                (y, Saved::Output { input: x })
            }
        };
        if let Some(saved) = saved.as_deref_mut() {
            saved.push(s);
        }
        x = y;
    }
    Ok(x)
}

fn gather_columns<T: Real>(x: &Tensor<T>, cols: &[usize]) -> Result<Tensor<T>, NnError> {
    let (bn, tn, dn) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if let Some(&bad) = cols.iter().find(|&&c| c >= dn) {
        return Err(NnError::Shape(format!("branch column {bad} outside input width {dn}")));
    }
    let mut data = Vec::with_capacity(bn * tn * cols.len());
    for row in x.data().chunks_exact(dn) {
        data.extend(cols.iter().map(|&c| row[c]));
    }
    Tensor::from_vec(&[bn, tn, cols.len(), 1], data)
}

fn check_input<T: Real>(graph: &NetworkGraph, x: &Tensor<T>) -> Result<(), NnError> {
    match x.shape() {
        [_, w, d] if *w == graph.window_len && *d == graph.channels => Ok(()),
        s => Err(NnError::Shape(format!(
            "input {s:?} does not match network input [B, {}, {}]",
            graph.window_len, graph.channels
        ))),
    }
}

fn run<T: Real>(
    graph: &NetworkGraph,
    params: &ParamSet<T>,
    x: &Tensor<T>,
    mut rng: Option<&mut SeededRng>,
    mut cache: Option<&mut Cache<T>>,
) -> Result<Tensor<T>, NnError> {
    check_input(graph, x)?;
    let bn = x.shape()[0];
    let stacks = graph.stacks();
    if let Some(c) = cache.as_deref_mut() {
        c.stacks = (0..stacks.len()).map(|_| Vec::new()).collect();
    }
    match &graph.topology {
        Topology::Sequential { .. } => {
            let input = x.clone().reshape(&[bn, graph.window_len, graph.channels, 1])?;
            stack_forward(&stacks[0], params, input, &mut rng, cache.as_deref_mut().map(|c| &mut c.stacks[0]))
        }
        Topology::BranchFusion { branches, .. } => {
            let mut outputs = Vec::with_capacity(branches.len());
            for (i, b) in branches.iter().enumerate() {
                let input = gather_columns(x, &b.channels)?;
                outputs.push(stack_forward(
                    &stacks[i],
                    params,
                    input,
                    &mut rng,
                    cache.as_deref_mut().map(|c| &mut c.stacks[i]),
                )?);
            }
            let widths: Vec<usize> = outputs.iter().map(|o| o.shape()[1]).collect();
            let total: usize = widths.iter().sum();
            let mut concat = Vec::with_capacity(bn * total);
            for r in 0..bn {
                for (o, &w) in outputs.iter().zip(&widths) {
                    concat.extend_from_slice(&o.data()[r * w..(r + 1) * w]);
                }
            }
            let fused = Tensor::from_vec(&[bn, total], concat)?;
            let nb = branches.len();
            let y =
                stack_forward(&stacks[nb], params, fused, &mut rng, cache.as_deref_mut().map(|c| &mut c.stacks[nb]))?;
            if let Some(c) = cache {
                c.branch_widths = widths;
            }
            Ok(y)
        }
    }
}

/// Inference-mode logits: dropout is the identity and nothing is cached.
pub fn forward<T: Real>(graph: &NetworkGraph, params: &ParamSet<T>, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    run(graph, params, x, None, None)
}

/// Forward pass that keeps activations for [`backward`]. Dropout masks are
/// drawn from `dropout` when given; `None` disables dropout.
pub fn forward_train<T: Real>(
    graph: &NetworkGraph,
    params: &ParamSet<T>,
    x: &Tensor<T>,
    dropout: Option<&mut SeededRng>,
) -> Result<(Tensor<T>, Cache<T>), NnError> {
    let mut cache = Cache { stacks: Vec::new(), branch_widths: Vec::new() };
    let y = run(graph, params, x, dropout, Some(&mut cache))?;
    Ok((y, cache))
}

fn stack_backward<T: Real>(
    stack: &Stack<'_>,
    params: &ParamSet<T>,
    saved: &[Saved<T>],
    mut dy: Tensor<T>,
    need_input_grad: bool,
    grads: &mut HashMap<String, Tensor<T>>,
) -> Result<Option<Tensor<T>>, NnError> {
    if saved.len() != stack.layers.len() {
        return Err(NnError::Cache(format!(
            "stack `{}` has {} layers but {} cached activations",
            stack.prefix,
            stack.layers.len(),
            saved.len()
        )));
    }
    for (i, (l, s)) in stack.layers.iter().zip(saved).enumerate().rev() {
        let name = format!("{}{}", stack.prefix, l.name);
        let need = i > 0 || need_input_grad;
        let next = match (&l.spec, s) {
            (LayerSpec::TemporalConv { activation, .. }, Saved::Conv { input, output }) => {
                let w = param(params, &stack.prefix, &l.name, "W")?;
                let b = param(params, &stack.prefix, &l.name, "b")?;
                let g = conv_backward(input, w, b, output, &dy, *activation, need, &name)?;
                grads.insert(format!("{name}.W"), g.weight);
                grads.insert(format!("{name}.b"), g.bias);
                g.input
            }
            (LayerSpec::Flatten, Saved::Flatten { shape }) => Some(dy.reshape(shape)?),
            (LayerSpec::Dense { activation, .. }, Saved::Dense { input, output }) => {
                let w = param(params, &stack.prefix, &l.name, "W")?;
                let b = param(params, &stack.prefix, &l.name, "b")?;
                let g = dense_backward(input, w, b, output, &dy, *activation, need, &name)?;
                grads.insert(format!("{name}.W"), g.weight);
                grads.insert(format!("{name}.b"), g.bias);
                g.input
            }
            (LayerSpec::Dropout { .. }, Saved::Dropout { mask }) => {
                if let Some(mask) = mask {
                    for (g, &m) in dy.data_mut().iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
                Some(dy)
            }
            (LayerSpec::SoftmaxOutput { .. }, Saved::Output { input }) => {
                let w = param(params, &stack.prefix, &l.name, "W")?;
                let b = param(params, &stack.prefix, &l.name, "b")?;
                // the output layer is linear; its output is not needed
                let g = dense_backward(input, w, b, &dy, &dy, Activation::None, need, &name)?;
                grads.insert(format!("{name}.W"), g.weight);
                grads.insert(format!("{name}.b"), g.bias);
                g.input
            }
            _ => return Err(NnError::Cache(format!("cached activation of `{name}` has the wrong kind"))),
        };
        match next {
            Some(t) => dy = t,
            None => return Ok(None),
        }
    }
    Ok(Some(dy))
}

/// Reverse-mode gradients of every parameter, keyed and ordered like `params`.
pub fn backward<T: Real>(
    graph: &NetworkGraph,
    params: &ParamSet<T>,
    cache: &Cache<T>,
    dlogits: &Tensor<T>,
) -> Result<ParamSet<T>, NnError> {
    let stacks = graph.stacks();
    if cache.stacks.len() != stacks.len() {
        return Err(NnError::Cache(format!("{} stacks cached, graph has {}", cache.stacks.len(), stacks.len())));
    }
    let mut grads = HashMap::new();
    match &graph.topology {
        Topology::Sequential { .. } => {
            stack_backward(&stacks[0], params, &cache.stacks[0], dlogits.clone(), false, &mut grads)?;
        }
        Topology::BranchFusion { branches, .. } => {
            let nb = branches.len();
            let dfused = stack_backward(&stacks[nb], params, &cache.stacks[nb], dlogits.clone(), true, &mut grads)?
                .ok_or_else(|| NnError::Cache("fusion stack produced no input gradient".into()))?;
            let bn = dfused.shape()[0];
            let total: usize = cache.branch_widths.iter().sum();
            let mut offset = 0;
            for (i, &w) in cache.branch_widths.iter().enumerate() {
                let mut part = Vec::with_capacity(bn * w);
                for r in 0..bn {
                    part.extend_from_slice(&dfused.data()[r * total + offset..r * total + offset + w]);
                }
                offset += w;
                let dy = Tensor::from_vec(&[bn, w], part)?;
                stack_backward(&stacks[i], params, &cache.stacks[i], dy, false, &mut grads)?;
            }
        }
    }
    params
        .keys()
        .map(|k| {
            grads
                .remove(k)
                .map(|g| (k.clone(), g))
                .ok_or_else(|| NnError::Cache(format!("no gradient produced for `{k}`")))
        })
        .collect()
}

/// Sign pattern of every ReLU output in the cache, used to detect when a
/// finite-difference probe crosses a kink.
pub fn relu_pattern<T: Real>(graph: &NetworkGraph, cache: &Cache<T>) -> Vec<bool> {
    let mut out = Vec::new();
    for (stack, saved) in graph.stacks().iter().zip(&cache.stacks) {
        for (l, s) in stack.layers.iter().zip(saved) {
            let relu = matches!(
                l.spec,
                LayerSpec::TemporalConv { activation: Activation::Relu, .. }
                    | LayerSpec::Dense { activation: Activation::Relu, .. }
            );
            match s {
                Saved::Conv { output, .. } | Saved::Dense { output, .. } if relu => {
                    out.extend(output.data().iter().map(|&v| v > T::zero()));
                }
                _ => {}
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_tcnn, build_tcnn_imu, init_params};
    use crate::dataio::Limb;
    use rand::{Rng, SeedableRng};

    fn random_input(b: usize, w: usize, d: usize, seed: u64) -> Tensor<f32> {
        let mut rng = SeededRng::seed_from_u64(seed);
        Tensor::from_vec(&[b, w, d], (0..b * w * d).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect()).unwrap()
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let g = build_tcnn(20, 3, 4, 16, 0.5).unwrap();
        let p = init_params(&g, &mut SeededRng::seed_from_u64(1)).unwrap();
        let x = random_input(2, 20, 3, 2);
        let (y, cache) = forward_train(&g, &p, &x, None).unwrap();
        let grads = backward(&g, &p, &cache, &Tensor::zeros(y.shape())).unwrap();
        assert_eq!(grads.keys().collect::<Vec<_>>(), p.keys().collect::<Vec<_>>());
        assert!(grads.iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn inference_matches_training_without_dropout() {
        let g = build_tcnn(20, 3, 4, 16, 0.5).unwrap();
        let p = init_params(&g, &mut SeededRng::seed_from_u64(1)).unwrap();
        let x = random_input(3, 20, 3, 5);
        let a = forward(&g, &p, &x).unwrap();
        let (b, _) = forward_train(&g, &p, &x, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let g = build_tcnn(20, 3, 4, 16, 0.5).unwrap();
        let p = init_params(&g, &mut SeededRng::seed_from_u64(1)).unwrap();
        assert!(forward(&g, &p, &random_input(1, 19, 3, 0)).is_err());
    }

    #[test]
    fn cache_from_other_graph_is_rejected() {
        let g = build_tcnn(20, 2, 2, 8, 0.5).unwrap();
        let p = init_params(&g, &mut SeededRng::seed_from_u64(1)).unwrap();
        let layout = vec![(Limb::LA, vec![0]), (Limb::N, vec![1])];
        let gi = build_tcnn_imu(&layout, 20, 2, 8, 8, 0.5).unwrap();
        let pi = init_params(&gi, &mut SeededRng::seed_from_u64(1)).unwrap();
        let x = random_input(1, 20, 2, 0);
        let (y, cache) = forward_train(&gi, &pi, &x, None).unwrap();
        assert!(matches!(backward(&g, &p, &cache, &y), Err(NnError::Cache(_))));
    }

    #[test]
    fn zeroing_one_branch_only_moves_that_branch() {
        let layout = vec![(Limb::LA, vec![0, 1]), (Limb::RA, vec![2]), (Limb::N, vec![3])];
        let g = build_tcnn_imu(&layout, 20, 3, 8, 8, 0.5).unwrap();
        let p = init_params(&g, &mut SeededRng::seed_from_u64(3)).unwrap();
        let x = random_input(2, 20, 4, 9);
        let mut z = x.clone();
        for row in z.data_mut().chunks_exact_mut(4) {
            row[2] = 0.0;
        }
        let (_, ca) = forward_train(&g, &p, &x, None).unwrap();
        let (_, cb) = forward_train(&g, &p, &z, None).unwrap();
        let last = |c: &Cache<f32>, i: usize| match c.stacks[i].iter().rev().find(|s| matches!(s, Saved::Dense { .. }))
        {
            Some(Saved::Dense { output, .. }) => output.clone(),
            _ => unreachable!(),
        };
        assert_eq!(last(&ca, 0), last(&cb, 0));
        assert_ne!(last(&ca, 1), last(&cb, 1));
        assert_eq!(last(&ca, 2), last(&cb, 2));
    }
}
