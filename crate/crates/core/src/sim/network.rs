use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Duration;

use rand::Rng;

use crate::time::Timestamp;

/// Link behaviour shared by every simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Round-trip time between the resolver and an authority; each direction is half.
    pub rtt: Duration,
    /// Probability that a packet is held back by extra jitter.
    pub reorder_prob: f64,
    /// Upper bound of the uniform extra delay applied to held-back packets.
    pub jitter: Duration,
    pub loss: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            rtt: Duration::from_millis(100),
            reorder_prob: 0.0,
            jitter: Duration::from_millis(50),
            loss: 0.0,
        }
    }
}

impl NetConfig {
    /// One-way delivery delay for a packet, or `None` if it is lost.
    pub fn one_way<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Duration> {
        if self.loss > 0.0 && rng.random_bool(self.loss.min(1.0)) {
            return None;
        }
        let mut d = self.rtt / 2;
        if self.reorder_prob > 0.0 && rng.random_bool(self.reorder_prob.min(1.0)) {
            let extra = self.jitter.as_micros() as u64;
            if extra > 0 {
                d += Duration::from_micros(rng.random_range(1..=extra));
            }
        }
        Some(d)
    }
}

struct Scheduled<E> {
    at: Timestamp,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // Reversed so the max-heap pops the earliest event, ties broken by insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Events ordered by `(time, insertion sequence)`.
pub struct EventQueue<E> {
    heap: BinaryHeap<Scheduled<E>>,
    seq: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            seq: 0,
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, at: Timestamp, event: E) {
        self.heap.push(Scheduled {
            at,
            seq: self.seq,
            event,
        });
        self.seq += 1;
    }

    pub fn peek_time(&self) -> Option<Timestamp> {
        self.heap.peek().map(|s| s.at)
    }

    pub fn pop(&mut self) -> Option<(Timestamp, E)> {
        self.heap.pop().map(|s| (s.at, s.event))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pops_in_time_then_insertion_order() {
        let mut q = EventQueue::new();
        q.push(Timestamp::from_millis(5), "c");
        q.push(Timestamp::from_millis(1), "a");
        q.push(Timestamp::from_millis(5), "d");
        q.push(Timestamp::from_millis(1), "b");
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, ["a", "b", "c", "d"]);
    }

    #[test]
    fn delays() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = NetConfig::default();
        assert_eq!(net.one_way(&mut rng), Some(Duration::from_millis(50)));

        let lossy = NetConfig {
            loss: 1.0,
            ..NetConfig::default()
        };
        assert_eq!(lossy.one_way(&mut rng), None);

        let jittery = NetConfig {
            reorder_prob: 1.0,
            ..NetConfig::default()
        };
        for _ in 0..1000 {
            let d = jittery.one_way(&mut rng).unwrap();
            assert!(d > Duration::from_millis(50) && d <= Duration::from_millis(100));
        }
    }
}
