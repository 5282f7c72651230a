//! Heterogeneous-state fusion between neighbouring robots, with one channel
//! filter per link tracking the information the two robots already share.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::{predict, DynamicsModel};
use crate::gaussian::{min_eigenvalue, CanonicalGaussian, Timestep, VarSet, VariableKey};
use crate::graph::{FactorGraph, FactorId, FactorKind};
use crate::text;

/// The common-information record a robot keeps for one neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFilter {
    owner: u32,
    neighbor: u32,
    common_vars: VarSet,
    graph: FactorGraph,
}

impl ChannelFilter {
    /// A channel with no shared information yet.
    pub fn new(owner: u32, neighbor: u32, common_vars: VarSet) -> Result<Self> {
        if common_vars.is_empty() {
            return Err(Error::structural(format!(
                "robots {owner} and {neighbor} share no variables"
            )));
        }
        let mut graph = FactorGraph::new();
        for v in &common_vars {
            graph.add_variable(*v)?;
        }
        Ok(ChannelFilter {
            owner,
            neighbor,
            common_vars,
            graph,
        })
    }

    /// A channel whose shared information starts as `prior`, e.g. a prior both
    /// robots were initialized with.
    pub fn with_prior(owner: u32, neighbor: u32, prior: CanonicalGaussian) -> Result<Self> {
        let mut cf = Self::new(owner, neighbor, prior.var_set())?;
        cf.graph.add_factor(FactorKind::Prior, prior)?;
        Ok(cf)
    }

    pub fn owner(&self) -> u32 {
        self.owner
    }

    pub fn neighbor(&self) -> u32 {
        self.neighbor
    }

    pub fn common_vars(&self) -> &VarSet {
        &self.common_vars
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn is_empty(&self) -> bool {
        self.graph.factor_count() == 0
    }

    /// Joint common information held by the channel.
    pub fn joint(&self) -> CanonicalGaussian {
        self.graph.joint_canonical()
    }

    /// Replace the channel content by `own ⊗ incoming ⊘ cf`, the fused common
    /// marginal both endpoints arrive at.
    pub fn update(&mut self, own_marginal: &CanonicalGaussian, incoming: &FusionMessage) -> Result<()> {
        self.check_scope(own_marginal, "own marginal")?;
        self.check_scope(&incoming.payload, "incoming payload")?;
        let fused = own_marginal
            .multiply(&incoming.payload)?
            .divide(&self.joint())?;
        self.graph.clear_factors();
        self.graph.add_factor(FactorKind::Fusion, fused)?;
        Ok(())
    }

    /// Advance the common slice from `k` to `k+1` and marginalize the old
    /// slice exactly.
    pub fn predict(&mut self, dynamics: &DynamicsModel, k: u32) -> Result<()> {
        if self.common_vars.iter().all(|v| v.is_static()) {
            return Ok(());
        }
        let past = self.graph.variables_at(Timestep::At(k));
        if past.is_empty() {
            return Err(Error::structural(format!(
                "channel {}->{} has no slice at timestep {k}",
                self.owner, self.neighbor
            )));
        }
        if self.is_empty() {
            for v in past {
                self.graph.remove_variable(&v)?;
                self.graph.add_variable(v.at(k + 1))?;
            }
        } else {
            predict(&mut self.graph, dynamics, k)?;
            self.graph.eliminate(&past)?;
        }
        self.common_vars = self.graph.variables().clone();
        Ok(())
    }

    /// Scale every factor by `λ ∈ (0, 1]`.
    pub fn deflate(&mut self, lambda: f64) -> Result<()> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::structural(format!(
                "channel deflation constant {lambda} outside (0, 1]"
            )));
        }
        if lambda < 1.0 {
            self.graph.scale_factors(lambda);
        }
        Ok(())
    }

    fn check_scope(&self, g: &CanonicalGaussian, what: &str) -> Result<()> {
        if g.var_set() != self.common_vars {
            return Err(Error::structural(format!(
                "{what} for channel {}->{} is not over the channel's common variables",
                self.owner, self.neighbor
            )));
        }
        Ok(())
    }
}

/// A robot's marginal over the variables it shares with one neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionMessage {
    pub sender: u32,
    pub receiver: u32,
    pub timestep: u32,
    pub payload: CanonicalGaussian,
}

impl FusionMessage {
    pub fn to_text(&self) -> String {
        let p = &self.payload;
        let mut out = String::new();
        writeln!(out, "sender {}", self.sender).unwrap();
        writeln!(out, "receiver {}", self.receiver).unwrap();
        writeln!(out, "timestep {}", self.timestep).unwrap();
        let names: Vec<String> = p.vars().iter().map(|v| v.to_string()).collect();
        writeln!(out, "vars {}", names.join(" ")).unwrap();
        writeln!(out, "zeta {}", text::fmt_vector(p.info_vector())).unwrap();
        writeln!(out, "lambda").unwrap();
        for r in 0..p.dim() {
            writeln!(out, "  {}", text::fmt_row(p.info_matrix(), r)).unwrap();
        }
        out
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let mut field = |name: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("message ends before `{name}`")))?;
            let rest = line
                .strip_prefix(name)
                .ok_or_else(|| Error::Parse(format!("expected `{name}`, found `{line}`")))?;
            Ok(rest.trim().to_string())
        };
        let int = |v: String, name: &str| -> Result<u32> {
            v.parse()
                .map_err(|_| Error::Parse(format!("bad {name} `{v}`")))
        };
        let sender = int(field("sender")?, "sender")?;
        let receiver = int(field("receiver")?, "receiver")?;
        let timestep = int(field("timestep")?, "timestep")?;
        let vars = field("vars")?
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<VariableKey>>>()?;
        let zeta = text::parse_floats(&field("zeta")?)?;
        field("lambda")?;
        let n = zeta.len();
        let mut rows = Vec::with_capacity(n * n);
        for _ in 0..n {
            let row = text::parse_floats(&field("")?)?;
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "information matrix row has {} entries, expected {n}",
                    row.len()
                )));
            }
            rows.extend(row);
        }
        let payload = CanonicalGaussian::new(
            vars,
            DVector::from_vec(zeta),
            DMatrix::from_row_slice(n, n, &rows),
        )?;
        Ok(FusionMessage {
            sender,
            receiver,
            timestep,
            payload,
        })
    }
}

/// The message robot `channel.owner()` sends to its neighbour at timestep `k`.
pub fn prepare_message(g: &FactorGraph, channel: &ChannelFilter, k: u32) -> Result<FusionMessage> {
    if let Some(v) = channel
        .common_vars()
        .iter()
        .find(|v| !v.is_static() && v.timestep != Timestep::At(k))
    {
        return Err(Error::structural(format!(
            "channel variable {v} is not in the timestep-{k} slice"
        )));
    }
    Ok(FusionMessage {
        sender: channel.owner(),
        receiver: channel.neighbor(),
        timestep: k,
        payload: g.marginal(channel.common_vars())?,
    })
}

/// Add `incoming ⊘ cf` to the robot graph as a fusion factor. Returns `None`
/// when the message carries nothing new.
///
/// If the result would leave the robot's joint without positive-definite
/// information, the graph is left as it was and a negative-information error
/// is returned.
pub fn fuse(
    g: &mut FactorGraph,
    channel: &ChannelFilter,
    incoming: &FusionMessage,
) -> Result<Option<FactorId>> {
    if incoming.sender != channel.neighbor() || incoming.receiver != channel.owner() {
        return Err(Error::structural(format!(
            "message {}->{} delivered to channel {}->{}",
            incoming.sender,
            incoming.receiver,
            channel.owner(),
            channel.neighbor()
        )));
    }
    channel.check_scope(&incoming.payload, "incoming payload")?;
    let factor = incoming.payload.divide(&channel.joint())?;
    if factor.is_zero() {
        return Ok(None);
    }
    let joint = g.joint_canonical().multiply(&factor)?;
    if joint.info_matrix().clone().cholesky().is_none() {
        return Err(Error::NegativeInformation {
            robot: channel.owner(),
            neighbor: channel.neighbor(),
            timestep: incoming.timestep,
            min_eigenvalue: min_eigenvalue(joint.info_matrix()).unwrap_or(f64::NAN),
        });
    }
    g.add_factor(FactorKind::Fusion, factor).map(Some)
}
