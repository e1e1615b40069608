//! Pretraining: the alignment, reconstruction and diversity losses, their
//! gradients with the transport plans held fixed, and the optimization loop.

mod adam;
mod checkpoint;
mod gradcheck;

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::OptimizerKind;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, ComponentCheck, GradCheckReport, ENVELOPE_TOL, EXACT_TOL};

use crate::bases::{coordinates_prepared, diversity_loss, init_dictionary, linear_surrogate, softmax_backward, BaseDictionary};
use crate::decoder::{Decoder, DecoderGrad, DEFAULT_HIDDEN};
use crate::graph::{to_mm_space, Graph, MmSpace};
use crate::ot::{gw_gradient_b, EntropicOptions, GwSolver, Prepared, SliceSet, SolverKind, DEFAULT_EMBED_DIM};
use crate::stats::{feature_extract, StatVector, STAT_DIM};
use crate::{Error, Result};
use adam::Optimizer;

/// Run hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k: usize,
    pub m_nodes: usize,
    pub slices: usize,
    pub temperature: f64,
    pub alpha: f64,
    pub beta: f64,
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub solver: SolverKind,
    pub stop_grad_weights: bool,
    pub optimizer: OptimizerKind,
    /// Decoder hidden width.
    pub hidden: usize,
    /// Entropic regularization when `solver` is entropic.
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 16,
            m_nodes: 32,
            slices: 50,
            temperature: 0.3,
            alpha: 2.0,
            beta: 0.05,
            margin: 10.0,
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.01,
            seed: 42,
            solver: SolverKind::Sliced,
            stop_grad_weights: false,
            optimizer: OptimizerKind::Adam,
            hidden: DEFAULT_HIDDEN,
            epsilon: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k", self.k),
            ("m_nodes", self.m_nodes.saturating_sub(1)),
            ("slices", self.slices),
            ("batch_size", self.batch_size),
            ("hidden", self.hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} is too small")));
            }
        }
        for (name, v) in [
            ("temperature", self.temperature),
            ("margin", self.margin),
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.solver == SolverKind::Exact {
            return Err(Error::InvalidParameter(
                "the exact solver only handles equal-size uniform pairs and cannot train".into(),
            ));
        }
        Ok(())
    }

    /// The solver described by this configuration. Slice directions are
    /// seeded from `seed`.
    pub fn gw_solver(&self) -> Result<GwSolver> {
        let slices = SliceSet::new(self.slices, DEFAULT_EMBED_DIM, self.seed)?;
        let entropic = EntropicOptions::default().with_epsilon(self.epsilon);
        Ok(GwSolver::new(self.solver, entropic, slices))
    }
}

/// A graph ready for training: its space and statistics target.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub space: MmSpace,
    pub target: StatVector,
}

impl TrainItem {
    pub fn from_graph(g: &Graph) -> Result<Self> {
        Ok(TrainItem {
            space: to_mm_space(g)?,
            target: feature_extract(g),
        })
    }
}

/// Loss values and the gradient of each raw component.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub gw: f64,
    pub rec: f64,
    pub div: f64,
    /// `gw + α·rec + β·div`.
    pub total: f64,
    pub grad_gw_bases: Vec<Array2<f64>>,
    pub grad_rec_bases: Vec<Array2<f64>>,
    pub grad_rec_decoder: DecoderGrad,
    pub grad_div_bases: Vec<Array2<f64>>,
}

impl LossReport {
    /// Gradient of `total` with respect to every base.
    pub fn total_base_gradients(&self, cfg: &TrainConfig) -> Vec<Array2<f64>> {
        self.grad_gw_bases
            .iter()
            .zip(&self.grad_rec_bases)
            .zip(&self.grad_div_bases)
            .map(|((g, r), d)| g + &(r * cfg.alpha) + &(d * cfg.beta))
            .collect()
    }

    pub fn total_decoder_gradient(&self, cfg: &TrainConfig) -> DecoderGrad {
        let g = &self.grad_rec_decoder;
        DecoderGrad {
            w1: &g.w1 * cfg.alpha,
            b1: &g.b1 * cfg.alpha,
            w2: &g.w2 * cfg.alpha,
            b2: &g.b2 * cfg.alpha,
        }
    }
}

struct GraphTerms {
    gw: f64,
    rec: f64,
    grad_gw: Vec<Array2<f64>>,
    grad_rec: Vec<Array2<f64>>,
    grad_dec: DecoderGrad,
}

fn graph_terms(
    item: &TrainItem,
    prepared: &Prepared,
    bases: &[Prepared],
    dict: &BaseDictionary,
    dec: &Decoder,
    cfg: &TrainConfig,
    solver: &GwSolver,
) -> Result<GraphTerms> {
    let coords = coordinates_prepared(prepared, bases, dict.temperature(), solver)?;
    let w = &coords.weights;
    let k = dict.k();

    let surrogate = MmSpace::uniform(linear_surrogate(dict, w)?)?;
    let fit = solver.solve_prepared(prepared, &solver.prepare(&surrogate))?;
    let g_surrogate = gw_gradient_b(&item.space, &surrogate, &fit.coupling)?;

    let mut grad_gw: Vec<Array2<f64>> = (0..k).map(|j| &g_surrogate * w[j]).collect();
    let dw_gw: Array1<f64> = dict.bases().iter().map(|b| (b * &g_surrogate).sum()).collect();

    let decoded = dec.decode(w)?;
    let diff = &decoded - item.target.values();
    let r = diff.len() as f64;
    let rec = diff.dot(&diff) / r;
    let (grad_dec, dw_rec) = dec.decode_backward(w, &(&diff * (2.0 / r)))?;

    // envelope derivatives of every δ_k with respect to its own base
    let d_delta: Vec<Array2<f64>> = (0..k)
        .map(|j| gw_gradient_b(&item.space, bases[j].space(), &coords.couplings[j]))
        .collect::<Result<_>>()?;
    let mut grad_rec: Vec<Array2<f64>> = (0..k).map(|_| Array2::zeros((dict.m(), dict.m()))).collect();
    let chain_rec = softmax_backward(w, &dw_rec, dict.temperature());
    for j in 0..k {
        grad_rec[j].scaled_add(chain_rec[j], &d_delta[j]);
    }
    if !cfg.stop_grad_weights {
        let chain_gw = softmax_backward(w, &dw_gw, dict.temperature());
        for j in 0..k {
            grad_gw[j].scaled_add(chain_gw[j], &d_delta[j]);
        }
    }
    Ok(GraphTerms {
        gw: fit.cost,
        rec,
        grad_gw,
        grad_rec,
        grad_dec,
    })
}

/// Batch loss `mean(L_gw) + α mean(L_rec) + β L_div` with gradients.
///
/// `L_gw` is the solver cost between a graph and the linear surrogate of
/// its coordinates. Its gradient reaches the bases through the surrogate
/// and, unless `stop_grad_weights` is set, through the coordinates as well.
/// `L_rec` always reaches the bases through the coordinates. Every transport
/// cost is differentiated with its plan held fixed.
pub fn total_loss(
    batch: &[TrainItem],
    dict: &BaseDictionary,
    dec: &Decoder,
    cfg: &TrainConfig,
    solver: &GwSolver,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    if dec.input_dim() != dict.k() {
        return Err(Error::Shape(format!("decoder takes {} inputs for {} bases", dec.input_dim(), dict.k())));
    }
    let spaces = dict.base_spaces();
    let bases: Vec<Prepared> = spaces.iter().map(|s| solver.prepare(s)).collect();
    let terms: Vec<GraphTerms> = batch
        .par_iter()
        .map(|item| graph_terms(item, &solver.prepare(&item.space), &bases, dict, dec, cfg, solver))
        .collect::<Result<_>>()?;

    let n = batch.len() as f64;
    let zeros = || vec![Array2::<f64>::zeros((dict.m(), dict.m())); dict.k()];
    let (mut gw, mut rec) = (0.0, 0.0);
    let (mut grad_gw, mut grad_rec) = (zeros(), zeros());
    let mut grad_dec = DecoderGrad::zeros_like(dec);
    for t in &terms {
        gw += t.gw / n;
        rec += t.rec / n;
        for j in 0..dict.k() {
            grad_gw[j].scaled_add(1.0 / n, &t.grad_gw[j]);
            grad_rec[j].scaled_add(1.0 / n, &t.grad_rec[j]);
        }
        grad_dec.add_scaled(1.0 / n, &t.grad_dec);
    }
    let (div, grad_div) = diversity_loss(dict);
    Ok(LossReport {
        gw,
        rec,
        div,
        total: gw + cfg.alpha * rec + cfg.beta * div,
        grad_gw_bases: grad_gw,
        grad_rec_bases: grad_rec,
        grad_rec_decoder: grad_dec,
        grad_div_bases: grad_div,
    })
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub gw: f64,
    pub rec: f64,
    pub div: f64,
    pub total: f64,
}

fn flatten(grads: &[Array2<f64>], dec: &DecoderGrad) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend(g.iter());
    }
    for part in [dec.w1.iter(), dec.w2.iter()] {
        out.extend(part);
    }
    out.extend(dec.b1.iter());
    out.extend(dec.b2.iter());
    out
}

fn unflatten(flat: &[f64], like_bases: &[Array2<f64>], like_dec: &DecoderGrad) -> (Vec<Array2<f64>>, DecoderGrad) {
    let mut it = flat.iter().copied();
    let mut take = |dim: (usize, usize)| Array2::from_shape_fn(dim, |_| it.next().expect("sized"));
    let bases = like_bases.iter().map(|b| take(b.dim())).collect();
    let w1 = take(like_dec.w1.dim());
    let w2 = take(like_dec.w2.dim());
    let b1 = take((like_dec.b1.len(), 1)).into_shape_with_order(like_dec.b1.len()).expect("column");
    let b2 = take((like_dec.b2.len(), 1)).into_shape_with_order(like_dec.b2.len()).expect("column");
    (bases, DecoderGrad { w1, b1, w2, b2 })
}

/// Pretrains a dictionary and decoder on `corpus`.
pub fn pretrain(corpus: &[Graph], cfg: &TrainConfig) -> Result<Checkpoint> {
    pretrain_with(corpus, cfg, |_, _, _| {})
}

/// [`pretrain`] with a callback after every epoch, receiving the epoch
/// record, the current dictionary and the wall time of the epoch in seconds.
pub fn pretrain_with(
    corpus: &[Graph],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &BaseDictionary, f64),
) -> Result<Checkpoint> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidParameter("empty training corpus".into()));
    }
    let items: Vec<TrainItem> = corpus.iter().map(TrainItem::from_graph).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dict = init_dictionary(cfg.k, cfg.m_nodes, rng.gen())?
        .with_temperature(cfg.temperature)?
        .with_margin(cfg.margin)?;
    let mut dec = Decoder::init(cfg.k, cfg.hidden, STAT_DIM, rng.gen())?;
    let solver = cfg.gw_solver()?;
    let size = cfg.k * cfg.m_nodes * cfg.m_nodes + dec.w1.len() + dec.w2.len() + dec.b1.len() + dec.b2.len();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, size);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<TrainItem> = chunk.iter().map(|&i| items[i].clone()).collect();
            let wrap = |e: Error| Error::Training {
                epoch,
                batch: b,
                source: Box::new(e),
            };
            let report = total_loss(&batch, &dict, &dec, cfg, &solver).map_err(wrap)?;
            let weight = chunk.len() as f64 / items.len() as f64;
            for (s, v) in sums.iter_mut().zip([report.gw, report.rec, report.div, report.total]) {
                *s += weight * v;
            }
            let grads = report.total_base_gradients(cfg);
            let dgrad = report.total_decoder_gradient(cfg);
            let step = opt.step(&flatten(&grads, &dgrad));
            let (base_steps, dec_step) = unflatten(&step, &grads, &dgrad);
            dict.apply_step(&base_steps).map_err(wrap)?;
            dec.apply_step(&dec_step);
        }
        let record = EpochRecord {
            epoch,
            gw: sums[0],
            rec: sums[1],
            div: sums[2],
            total: sums[3],
        };
        on_epoch(&record, &dict, start.elapsed().as_secs_f64());
        log.push(record);
    }
    Ok(Checkpoint::new(cfg.clone(), dict, dec, log))
}
