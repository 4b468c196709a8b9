//! Line-oriented text description of a network.
//!
//! ```text
//! # comments start with '#'
//! layer dense 3x4            # out x in
//! weights 0.1 0.2 ...        # optional, row-major, out*in values
//! act relu                   # linear | relu | leaky_relu <slope>
//! layer shared 3x4 params=2
//! pattern 0,0,1 0,1,2 1,1,1  # row,col,param (1-based); repeatable
//! weights 0.5 -0.25          # optional, params values
//! act linear
//! layer dense 2x3
//! ```
//!
//! Layers and activations must alternate, starting and ending with a layer.
//! Missing `weights` lines mean all-zero weights.

use nalgebra::{DMatrix, DVector};

use super::{Activation, Layer, Network, SharedLayer};
use crate::{Error, Result};

enum Pending {
    Dense {
        out: usize,
        inp: usize,
        weights: Option<Vec<f64>>,
    },
    Shared {
        out: usize,
        inp: usize,
        params: usize,
        triples: Vec<(usize, usize, usize)>,
        weights: Option<Vec<f64>>,
    },
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_shape(line: usize, tok: Option<&str>) -> Result<(usize, usize)> {
    let tok = tok.ok_or_else(|| err(line, "missing shape OUTxIN"))?;
    let (o, i) = tok
        .split_once('x')
        .ok_or_else(|| err(line, format!("bad shape {tok:?}")))?;
    let o = o.parse().map_err(|_| err(line, format!("bad shape {tok:?}")))?;
    let i = i.parse().map_err(|_| err(line, format!("bad shape {tok:?}")))?;
    if o == 0 || i == 0 {
        return Err(err(line, "shape dimensions must be positive"));
    }
    Ok((o, i))
}

fn finish(pending: Pending, line: usize) -> Result<Layer> {
    match pending {
        Pending::Dense { out, inp, weights } => {
            let w = match weights {
                None => DMatrix::zeros(out, inp),
                Some(v) if v.len() == out * inp => DMatrix::from_row_slice(out, inp, &v),
                Some(v) => {
                    return Err(err(line, format!("expected {} weights, got {}", out * inp, v.len())))
                }
            };
            Ok(Layer::dense(w))
        }
        Pending::Shared {
            out,
            inp,
            params,
            triples,
            weights,
        } => {
            let p = match weights {
                None => DVector::zeros(params),
                Some(v) if v.len() == params => DVector::from_vec(v),
                Some(v) => return Err(err(line, format!("expected {params} weights, got {}", v.len()))),
            };
            SharedLayer::from_triples(out, inp, &triples, p)
                .map(Layer::Shared)
                .map_err(|e| err(line, e.to_string()))
        }
    }
}

impl Network {
    pub fn from_description(text: &str) -> Result<Network> {
        let mut layers = Vec::new();
        let mut acts = Vec::new();
        let mut pending: Option<(Pending, usize)> = None;
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut toks = content.split_whitespace();
            let keyword = toks.next().unwrap_or_default();
            match keyword {
                "layer" => {
                    if let Some((p, l)) = pending.take() {
                        layers.push(finish(p, l)?);
                    }
                    if layers.len() != acts.len() {
                        return Err(err(line, "two layers without an activation between them"));
                    }
                    let kind = toks.next();
                    let (out, inp) = parse_shape(line, toks.next())?;
                    let p = match kind {
                        Some("dense") => Pending::Dense {
                            out,
                            inp,
                            weights: None,
                        },
                        Some("shared") => {
                            let spec = toks
                                .next()
                                .and_then(|t| t.strip_prefix("params="))
                                .ok_or_else(|| err(line, "shared layer needs params=<count>"))?;
                            let params = spec
                                .parse()
                                .map_err(|_| err(line, format!("bad parameter count {spec:?}")))?;
                            Pending::Shared {
                                out,
                                inp,
                                params,
                                triples: Vec::new(),
                                weights: None,
                            }
                        }
                        other => return Err(err(line, format!("unknown layer kind {other:?}"))),
                    };
                    if let Some(extra) = toks.next() {
                        return Err(err(line, format!("unexpected token {extra:?}")));
                    }
                    pending = Some((p, line));
                }
                "weights" => {
                    let values = toks
                        .map(|t| t.parse::<f64>().map_err(|_| err(line, format!("bad number {t:?}"))))
                        .collect::<Result<Vec<_>>>()?;
                    match pending.as_mut() {
                        Some((Pending::Dense { weights, .. }, _))
                        | Some((Pending::Shared { weights, .. }, _)) => {
                            if weights.is_some() {
                                return Err(err(line, "duplicate weights line"));
                            }
                            *weights = Some(values);
                        }
                        None => return Err(err(line, "weights outside a layer")),
                    }
                }
                "pattern" => match pending.as_mut() {
                    Some((Pending::Shared { triples, .. }, _)) => {
                        for t in toks {
                            let parts: Vec<_> = t.split(',').collect();
                            let nums = parts
                                .iter()
                                .map(|p| p.parse::<usize>())
                                .collect::<std::result::Result<Vec<_>, _>>()
                                .map_err(|_| err(line, format!("bad triple {t:?}")))?;
                            if nums.len() != 3 {
                                return Err(err(line, format!("bad triple {t:?}")));
                            }
                            triples.push((nums[0], nums[1], nums[2]));
                        }
                    }
                    _ => return Err(err(line, "pattern outside a shared layer")),
                },
                "act" => {
                    if let Some((p, l)) = pending.take() {
                        layers.push(finish(p, l)?);
                    }
                    if layers.len() != acts.len() + 1 {
                        return Err(err(line, "activation must follow a layer"));
                    }
                    let act = match toks.next() {
                        Some("linear") => Activation::Linear,
                        Some("relu") => Activation::Relu,
                        Some("leaky_relu") => {
                            let slope = toks
                                .next()
                                .ok_or_else(|| err(line, "leaky_relu needs a slope"))?;
                            let slope: f64 = slope
                                .parse()
                                .map_err(|_| err(line, format!("bad slope {slope:?}")))?;
                            Activation::leaky_relu(slope).map_err(|e| err(line, e.to_string()))?
                        }
                        other => return Err(err(line, format!("unknown activation {other:?}"))),
                    };
                    if let Some(extra) = toks.next() {
                        return Err(err(line, format!("unexpected token {extra:?}")));
                    }
                    acts.push(act);
                }
                other => return Err(err(line, format!("unknown keyword {other:?}"))),
            }
        }
        if let Some((p, l)) = pending.take() {
            layers.push(finish(p, l)?);
        }
        if layers.len() != acts.len() + 1 {
            return Err(err(last_line, "description must end with a layer"));
        }
        Network::new(layers, acts).map_err(|e| err(last_line, e.to_string()))
    }

    pub fn to_description(&self) -> String {
        let mut out = String::new();
        for (h, layer) in self.layers().iter().enumerate() {
            if h > 0 {
                out.push_str(&format!("act {}\n", self.activations[h - 1]));
            }
            let (o, i) = layer.shape();
            match layer {
                Layer::Dense(d) => {
                    out.push_str(&format!("layer dense {o}x{i}\n"));
                    let vals: Vec<String> = (0..o)
                        .flat_map(|r| (0..i).map(move |c| (r, c)))
                        .map(|(r, c)| format!("{}", d.weight[(r, c)]))
                        .collect();
                    out.push_str(&format!("weights {}\n", vals.join(" ")));
                }
                Layer::Shared(s) => {
                    out.push_str(&format!("layer shared {o}x{i} params={}\n", s.params.len()));
                    let triples: Vec<String> = (0..o)
                        .flat_map(|r| (0..i).map(move |c| (r, c)))
                        .filter(|&(r, c)| s.pattern_at(r, c) > 0)
                        .map(|(r, c)| format!("{r},{c},{}", s.pattern_at(r, c)))
                        .collect();
                    if !triples.is_empty() {
                        out.push_str(&format!("pattern {}\n", triples.join(" ")));
                    }
                    let vals: Vec<String> = s.params.iter().map(|v| format!("{v}")).collect();
                    out.push_str(&format!("weights {}\n", vals.join(" ")));
                }
            }
        }
        out
    }
}
