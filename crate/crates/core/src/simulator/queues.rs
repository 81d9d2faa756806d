//! Non-spatial queueing comparators.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::config::FileDistribution;
use crate::{Error, Result};

/// Single-server processor-sharing queue with Poisson arrivals.
///
/// Arrivals come at rate `lambda`, files follow `files` (mean `L`) and the
/// server delivers `capacity·L` work per unit time, split equally among the
/// customers present. The mean sojourn is `1/(capacity − lambda)` for every
/// file law, i.e. `L/(λ_c − λ)` at `L = 1` with `capacity = λ_c`.
#[derive(Debug, Clone, Copy)]
pub struct PsQueue {
    pub lambda: f64,
    pub capacity: f64,
    pub files: FileDistribution,
}

/// Exponential-file PS comparator.
pub fn mm1_ps_comparator(lambda: f64, mean_file: f64, capacity: f64) -> Result<PsQueue> {
    mgi1_ps_comparator(lambda, FileDistribution::exponential(mean_file)?, capacity)
}

/// PS comparator with an arbitrary file law.
pub fn mgi1_ps_comparator(lambda: f64, files: FileDistribution, capacity: f64) -> Result<PsQueue> {
    files.validate()?;
    if !(capacity.is_finite() && capacity > 0.0) {
        return Err(Error::Parameter(format!("server capacity must be positive, got {capacity}")));
    }
    if !(lambda > 0.0 && lambda < capacity) {
        return Err(Error::Parameter(format!(
            "processor-sharing queue is unstable or empty: need 0 < λ < capacity, got λ = {lambda}, capacity = {capacity}"
        )));
    }
    Ok(PsQueue { lambda, capacity, files })
}

#[derive(PartialEq)]
struct Tag(f64, usize);

impl Eq for Tag {}
impl PartialOrd for Tag {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Tag {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PsQueue {
    pub fn load(&self) -> f64 {
        self.lambda / self.capacity
    }

    pub fn mean_sojourn(&self) -> f64 {
        1.0 / (self.capacity - self.lambda)
    }

    /// Sojourn times of customers `skip..skip + n` in arrival order,
    /// starting from an empty queue.
    ///
    /// Uses the attained-service clock `V(t)`: with `k` customers present it
    /// grows at `speed/k`, and a customer arriving at `V` with file `x`
    /// leaves when `V` reaches `V + x`.
    pub fn sample_sojourns<R: Rng + ?Sized>(&self, n: usize, skip: usize, rng: &mut R) -> Vec<f64> {
        let speed = self.capacity * self.files.mean();
        let gaps = Exp::new(self.lambda).expect("validated arrival rate");
        let mut heap: BinaryHeap<Reverse<Tag>> = BinaryHeap::new();
        let mut arrival_times: Vec<f64> = Vec::new();
        let mut out = vec![f64::NAN; n];
        let mut collected = 0;
        let (mut now, mut virt) = (0.0f64, 0.0f64);
        let mut next_arrival = gaps.sample(rng);
        let mut arrived = 0usize;
        while collected < n {
            let k = heap.len();
            let departure = heap.peek().map_or(f64::INFINITY, |Reverse(t)| now + (t.0 - virt) * k as f64 / speed);
            if next_arrival <= departure {
                if k > 0 {
                    virt += (next_arrival - now) * speed / k as f64;
                }
                now = next_arrival;
                let file = self.files.sample(rng);
                heap.push(Reverse(Tag(virt + file, arrived)));
                arrival_times.push(now);
                arrived += 1;
                next_arrival = now + gaps.sample(rng);
            } else {
                let Reverse(Tag(tag, idx)) = heap.pop().expect("departure implies a customer");
                virt = tag;
                now = departure;
                if idx >= skip && idx < skip + n {
                    out[idx - skip] = now - arrival_times[idx];
                    collected += 1;
                }
            }
        }
        out
    }
}

/// Interference-free comparator: every link is served alone at `solo_rate`.
#[derive(Debug, Clone, Copy)]
pub struct MmInfComparator {
    pub files: FileDistribution,
    pub solo_rate: f64,
}

pub fn mminf_comparator(files: FileDistribution, solo_rate: f64) -> Result<MmInfComparator> {
    files.validate()?;
    if !(solo_rate.is_finite() && solo_rate > 0.0) {
        return Err(Error::Parameter(format!("solo rate must be positive, got {solo_rate}")));
    }
    Ok(MmInfComparator { files, solo_rate })
}

impl MmInfComparator {
    pub fn mean_sojourn(&self) -> f64 {
        self.files.mean() / self.solo_rate
    }

    pub fn sample_sojourns<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.files.sample(rng) / self.solo_rate).collect()
    }

    pub fn ccdf(&self, t: f64) -> f64 {
        self.files.ccdf(t * self.solo_rate)
    }
}
