//! QoS of a bound process: supply-mode adjustment and block-wise
//! aggregation (sum/max/product/mean).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{QosVector, ServiceSpec, SupplyMode};
use crate::process::{Block, ProcessGraph};

/// Cost multiplier applied to spot-mode services.
pub const SPOT_COST_FACTOR: f64 = 0.5;

/// QoS a service delivers under its supply mode: reserved capacity is always
/// available, spot capacity is half price.
pub fn effective_qos(s: &ServiceSpec) -> QosVector {
    let mut q = s.qos.clone();
    match s.supply_mode {
        SupplyMode::Reserved => q.availability = 1.0,
        SupplyMode::Spot => q.cost *= SPOT_COST_FACTOR,
        SupplyMode::OnDemand => {}
    }
    q
}

/// Running aggregate; `count` is the number of activities the rating mean
/// is taken over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Acc {
    pub cost: f64,
    pub time: f64,
    pub availability: f64,
    pub rating_sum: f64,
    pub count: usize,
}

impl Acc {
    pub const EMPTY: Acc = Acc { cost: 0.0, time: 0.0, availability: 1.0, rating_sum: 0.0, count: 0 };

    pub fn qos(&self) -> QosVector {
        QosVector {
            cost: self.cost,
            time: self.time,
            availability: self.availability,
            rating: if self.count == 0 { 0.0 } else { self.rating_sum / self.count as f64 },
        }
    }

    fn mean_rating(&self) -> f64 {
        if self.count == 0 {
            f64::INFINITY
        } else {
            self.rating_sum / self.count as f64
        }
    }
}

pub fn acc(block: &Block<QosVector>) -> Acc {
    match block {
        Block::Activity(q) => Acc { cost: q.cost, time: q.time, availability: q.availability, rating_sum: q.rating, count: 1 },
        Block::Seq(v) => v.iter().map(acc).fold(Acc::EMPTY, |a, b| Acc {
            cost: a.cost + b.cost,
            time: a.time + b.time,
            availability: a.availability * b.availability,
            rating_sum: a.rating_sum + b.rating_sum,
            count: a.count + b.count,
        }),
        Block::Parallel(v) => v.iter().map(acc).fold(Acc::EMPTY, |a, b| Acc {
            cost: a.cost + b.cost,
            time: a.time.max(b.time),
            availability: a.availability * b.availability,
            rating_sum: a.rating_sum + b.rating_sum,
            count: a.count + b.count,
        }),
        Block::Exclusive(v) => {
            let parts: Vec<Acc> = v.iter().map(acc).collect();
            if parts.is_empty() {
                return Acc::EMPTY;
            }
            // Worst branch per metric; the rating comes from the branch with
            // the lowest mean.
            let worst_rating = parts
                .iter()
                .filter(|p| p.count > 0)
                .min_by(|a, b| a.mean_rating().total_cmp(&b.mean_rating()))
                .copied()
                .unwrap_or(Acc::EMPTY);
            Acc {
                cost: parts.iter().map(|p| p.cost).fold(0.0, f64::max),
                time: parts.iter().map(|p| p.time).fold(0.0, f64::max),
                availability: parts.iter().map(|p| p.availability).fold(1.0, f64::min),
                rating_sum: worst_rating.rating_sum,
                count: worst_rating.count,
            }
        }
    }
}

/// Aggregates leaf QoS over a block: cost adds up, time follows the critical
/// path, availability multiplies, rating is the mean over activities.
/// Exclusive choices take the worst branch.
pub fn aggregate_block(block: &Block<QosVector>) -> QosVector {
    acc(block).qos()
}

/// Aggregate QoS of `process` with each activity bound through `binding` to
/// a service in `services`.
pub fn aggregate_qos(
    process: &ProcessGraph,
    binding: &BTreeMap<String, String>,
    services: &BTreeMap<String, ServiceSpec>,
) -> Result<QosVector> {
    let block = process.to_block()?;
    let mut missing = None;
    let bound = block.map(&mut |act: &String| {
        match binding.get(act).and_then(|sid| services.get(sid)) {
            Some(s) => effective_qos(s),
            None => {
                missing.get_or_insert_with(|| act.clone());
                QosVector::new(0.0, 0.0, 1.0, 0.0)
            }
        }
    });
    if let Some(act) = missing {
        return Err(Error::UnboundActivity(act));
    }
    Ok(aggregate_block(&bound))
}
