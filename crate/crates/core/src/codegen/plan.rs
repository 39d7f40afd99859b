//! Executable plans: one loop nest per summand plus an index plan per access.

use crate::affine::Var;
use crate::error::{Error, Result};
use crate::indexing::{CompiledRule, IndexFunction, IndexPlan};

use super::loopnest::LoopNest;

/// Loop order. Only the rule's own iterator order is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Schedule {
    #[default]
    Identity,
}

#[derive(Clone, Debug)]
pub struct AccessPlan {
    pub tensor: String,
    pub buffer: usize,
    /// Buffer's index function seen through this access.
    pub function: IndexFunction,
    pub index: IndexPlan,
}

#[derive(Clone, Debug)]
pub struct SummandPlan {
    /// Position among the rule's compressed summands.
    pub index: usize,
    pub nest: LoopNest,
    pub output: AccessPlan,
    pub inputs: Vec<AccessPlan>,
    /// The outermost iterator indexes the output, so chunks of its range
    /// write disjoint output positions.
    pub parallelizable: bool,
}

#[derive(Clone, Debug)]
pub struct KernelPlan {
    pub compiled: CompiledRule,
    pub params: Vec<Var>,
    pub summands: Vec<SummandPlan>,
    pub schedule: Schedule,
}

impl KernelPlan {
    pub fn build(compiled: CompiledRule) -> Result<Self> {
        let params = compiled.params.clone();
        let mut summands = Vec::new();
        for (si, cs) in compiled.summands.iter().enumerate() {
            if cs.summand.empty || cs.space.empty {
                continue;
            }
            let dims = cs.space.dims.clone();
            let nest = LoopNest::build(&dims, &params, &cs.space.constraints)?;
            if nest.empty {
                continue;
            }
            let slots = nest.slots();
            let mut plans = Vec::new();
            for (slot, a) in cs.summand.accesses().enumerate() {
                let b = compiled.registry.buffer(si, slot).ok_or_else(|| {
                    Error::Invalid(format!("access {slot} of summand {si} has no buffer"))
                })?;
                let function = b.function.for_access(a);
                let index = IndexPlan::compile(&function.rank, &dims, &slots)?;
                plans.push(AccessPlan {
                    tensor: a.tensor.clone(),
                    buffer: b.id,
                    function,
                    index,
                });
            }
            let output = plans.remove(0);
            let parallelizable = dims
                .first()
                .is_some_and(|d| cs.summand.output.indices.contains(d));
            summands.push(SummandPlan {
                index: si,
                nest,
                output,
                inputs: plans,
                parallelizable,
            });
        }
        Ok(KernelPlan {
            compiled,
            params,
            summands,
            schedule: Schedule::Identity,
        })
    }

    /// Every index plan is a single hoisted polynomial.
    pub fn fully_hoisted(&self) -> bool {
        self.summands
            .iter()
            .all(|s| s.output.index.is_hoisted() && s.inputs.iter().all(|a| a.index.is_hoisted()))
    }
}
