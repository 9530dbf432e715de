//! Plain-text graph format, one layer per block:
//!
//! ```text
//! compgraph v1
//! input_dim 2
//! outputs max2
//! layers 2
//! layer 0 relu 4 2
//! weights
//! 1 1
//! -1 -1
//! 1 -1
//! -1 1
//! bias
//! 0 0 0 0
//! layer 1 identity 1 4
//! ...
//! ```
//!
//! Activations are `identity`, `relu`, `sigmoid`, or a run-length encoded
//! mix such as `mixed:relu*4+identity*2`. Values use the shortest decimal
//! representation that round-trips exactly.

use super::{Activation, CompGraph, Layer, LayerActivation, NetError};
use ndarray::{Array1, Array2};
use std::fmt::Write as _;

fn activation_token(act: &LayerActivation, out_dim: usize) -> String {
    match act {
        LayerActivation::Uniform(a) => a.name().to_string(),
        LayerActivation::PerUnit(units) => {
            let mut runs: Vec<(Activation, usize)> = Vec::new();
            for &a in units {
                match runs.last_mut() {
                    Some((prev, count)) if *prev == a => *count += 1,
                    _ => runs.push((a, 1)),
                }
            }
            debug_assert_eq!(runs.iter().map(|(_, c)| c).sum::<usize>(), out_dim);
            let parts: Vec<String> = runs
                .iter()
                .map(|(a, c)| format!("{}*{}", a.name(), c))
                .collect();
            format!("mixed:{}", parts.join("+"))
        }
    }
}

fn parse_activation(token: &str, out_dim: usize, line: usize) -> Result<LayerActivation, NetError> {
    let base = |name: &str| -> Option<Activation> {
        match name {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => None,
        }
    };
    if let Some(a) = base(token) {
        return Ok(LayerActivation::Uniform(a));
    }
    if let Some(rle) = token.strip_prefix("mixed:") {
        let mut units = Vec::new();
        for part in rle.split('+') {
            let (name, count) = part.split_once('*').ok_or(NetError::ParseError {
                line,
                msg: format!("bad activation run '{part}'"),
            })?;
            let a = base(name).ok_or(NetError::ParseError {
                line,
                msg: format!("unknown activation '{name}'"),
            })?;
            let c: usize = count.parse().map_err(|_| NetError::ParseError {
                line,
                msg: format!("bad run count '{count}'"),
            })?;
            units.extend(std::iter::repeat_n(a, c));
        }
        if units.len() != out_dim {
            return Err(NetError::ParseError {
                line,
                msg: format!(
                    "activation covers {} units, layer has {out_dim}",
                    units.len()
                ),
            });
        }
        return Ok(LayerActivation::PerUnit(units));
    }
    Err(NetError::ParseError {
        line,
        msg: format!("unknown activation '{token}'"),
    })
}

/// Render a graph into the documented text format.
pub fn graph_to_text(graph: &CompGraph) -> String {
    let mut out = String::new();
    out.push_str("compgraph v1\n");
    let _ = writeln!(out, "input_dim {}", graph.input_dim());
    let _ = writeln!(out, "outputs {}", graph.output_names().join(" "));
    let _ = writeln!(out, "layers {}", graph.layers().len());
    for (i, layer) in graph.layers().iter().enumerate() {
        let _ = writeln!(
            out,
            "layer {i} {} {} {}",
            activation_token(&layer.activation, layer.out_dim()),
            layer.out_dim(),
            layer.in_dim()
        );
        out.push_str("weights\n");
        for row in layer.weights.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out.push_str("bias\n");
        let cells: Vec<String> = layer.bias.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), NetError> {
        for (i, raw) in self.iter.by_ref() {
            let line = raw.trim();
            if !line.is_empty() {
                return Ok((i + 1, line));
            }
        }
        Err(NetError::ParseError {
            line: 0,
            msg: "unexpected end of input".into(),
        })
    }

    fn expect(&mut self, keyword: &str) -> Result<(usize, Vec<String>), NetError> {
        let (ln, line) = self.next()?;
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or("");
        if head != keyword {
            return Err(NetError::ParseError {
                line: ln,
                msg: format!("expected '{keyword}', found '{head}'"),
            });
        }
        Ok((ln, parts.map(str::to_string).collect()))
    }
}

fn parse_floats(line: &str, ln: usize) -> Result<Vec<f64>, NetError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| NetError::ParseError {
                line: ln,
                msg: format!("bad number '{tok}'"),
            })
        })
        .collect()
}

/// Parse the documented text format back into a graph.
pub fn graph_from_text(text: &str) -> Result<CompGraph, NetError> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
    };
    let (ln, header) = lines.next()?;
    if header != "compgraph v1" {
        return Err(NetError::ParseError {
            line: ln,
            msg: format!("bad header '{header}'"),
        });
    }
    let parse_usize = |tok: &str, ln: usize| -> Result<usize, NetError> {
        tok.parse().map_err(|_| NetError::ParseError {
            line: ln,
            msg: format!("bad integer '{tok}'"),
        })
    };

    let (ln, args) = lines.expect("input_dim")?;
    let input_dim = parse_usize(args.first().map_or("", String::as_str), ln)?;
    let (_, output_names) = lines.expect("outputs")?;
    let (ln, args) = lines.expect("layers")?;
    let n_layers = parse_usize(args.first().map_or("", String::as_str), ln)?;

    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let (ln, args) = lines.expect("layer")?;
        if args.len() != 4 {
            return Err(NetError::ParseError {
                line: ln,
                msg: "layer header needs: index activation out in".into(),
            });
        }
        let idx = parse_usize(&args[0], ln)?;
        if idx != i {
            return Err(NetError::ParseError {
                line: ln,
                msg: format!("expected layer {i}, found {idx}"),
            });
        }
        let out_dim = parse_usize(&args[2], ln)?;
        let in_dim = parse_usize(&args[3], ln)?;
        let activation = parse_activation(&args[1], out_dim, ln)?;

        lines.expect("weights")?;
        let mut weights = Array2::zeros((out_dim, in_dim));
        for r in 0..out_dim {
            let (ln, line) = lines.next()?;
            let row = parse_floats(line, ln)?;
            if row.len() != in_dim {
                return Err(NetError::ParseError {
                    line: ln,
                    msg: format!("row has {} values, expected {in_dim}", row.len()),
                });
            }
            for (c, v) in row.into_iter().enumerate() {
                weights[(r, c)] = v;
            }
        }
        lines.expect("bias")?;
        let (ln, line) = lines.next()?;
        let bias = parse_floats(line, ln)?;
        if bias.len() != out_dim {
            return Err(NetError::ParseError {
                line: ln,
                msg: format!("bias has {} values, expected {out_dim}", bias.len()),
            });
        }
        layers.push(Layer {
            weights,
            bias: Array1::from(bias),
            activation,
        });
    }
    CompGraph::new(input_dim, layers, output_names)
}
