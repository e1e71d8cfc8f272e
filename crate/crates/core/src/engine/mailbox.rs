//! Per-agent storage of the latest neighbor values received.

use nalgebra::DVector;

use crate::graph::NetworkSpec;

/// A value together with the global update count right after it was written.
#[derive(Debug, Clone, PartialEq)]
pub struct Stamped {
    pub value: DVector<f64>,
    pub stamp: u64,
}

/// Slots for every neighbor primal `x^j` (`j ∈ N_i \ {i}`) and every
/// non-owned incident dual `y^e` (`e ∈ E_i \ L_i`).
#[derive(Debug, Clone)]
pub struct Mailbox {
    primal: Vec<(usize, Stamped)>,
    dual: Vec<(usize, Stamped)>,
}

impl Mailbox {
    pub fn new(
        net: &NetworkSpec,
        agent: usize,
        x0: impl Fn(usize) -> DVector<f64>,
        y0: impl Fn(usize) -> DVector<f64>,
    ) -> Self {
        let primal = net
            .neighbors(agent)
            .iter()
            .filter(|&&j| j != agent)
            .map(|&j| (j, Stamped { value: x0(j), stamp: 0 }))
            .collect();
        let dual = net
            .incident_edges(agent)
            .iter()
            .filter(|&&e| net.owner(e) != agent)
            .map(|&e| (e, Stamped { value: y0(e), stamp: 0 }))
            .collect();
        Mailbox { primal, dual }
    }

    pub fn primal(&self, j: usize) -> Option<&Stamped> {
        self.primal.iter().find(|(k, _)| *k == j).map(|(_, s)| s)
    }

    pub fn dual(&self, e: usize) -> Option<&Stamped> {
        self.dual.iter().find(|(k, _)| *k == e).map(|(_, s)| s)
    }

    /// Stores `value` unless the slot already holds a newer one. Returns
    /// whether the value was accepted.
    pub fn offer_primal(&mut self, j: usize, value: &DVector<f64>, stamp: u64) -> bool {
        Self::offer(&mut self.primal, j, value, stamp)
    }

    pub fn offer_dual(&mut self, e: usize, value: &DVector<f64>, stamp: u64) -> bool {
        Self::offer(&mut self.dual, e, value, stamp)
    }

    fn offer(slots: &mut [(usize, Stamped)], key: usize, value: &DVector<f64>, stamp: u64) -> bool {
        match slots.iter_mut().find(|(k, _)| *k == key) {
            Some((_, slot)) if stamp > slot.stamp => {
                slot.value.copy_from(value);
                slot.stamp = stamp;
                true
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn star() -> NetworkSpec {
        NetworkSpec::new(3, vec![(0, 1), (0, 2)]).unwrap()
    }

    #[test]
    fn slots_follow_ownership() {
        let net = star();
        let zero = |_| DVector::zeros(2);
        let hub = Mailbox::new(&net, 0, zero, zero);
        assert!(hub.primal(1).is_some() && hub.primal(2).is_some() && hub.primal(0).is_none());
        // the hub owns both edges, so it never receives duals
        assert!(hub.dual(0).is_none() && hub.dual(1).is_none());
        let leaf = Mailbox::new(&net, 2, zero, zero);
        assert!(leaf.primal(0).is_some() && leaf.primal(1).is_none());
        assert!(leaf.dual(1).is_some() && leaf.dual(0).is_none());
    }

    #[test]
    fn stale_messages_are_discarded() {
        let net = star();
        let mut mb = Mailbox::new(&net, 1, |_| DVector::zeros(1), |_| DVector::zeros(1));
        assert!(mb.offer_primal(0, &DVector::from_element(1, 5.0), 7));
        assert!(!mb.offer_primal(0, &DVector::from_element(1, 3.0), 4));
        assert_eq!(mb.primal(0).unwrap().value[0], 5.0);
        assert_eq!(mb.primal(0).unwrap().stamp, 7);
        assert!(!mb.offer_primal(2, &DVector::from_element(1, 1.0), 9));
    }

    proptest! {
        #[test]
        fn stamps_never_decrease(stamps in prop::collection::vec(1u64..50, 1..40)) {
            let net = star();
            let mut mb = Mailbox::new(&net, 1, |_| DVector::zeros(1), |_| DVector::zeros(1));
            let mut best = 0;
            for s in stamps {
                let before = mb.primal(0).unwrap().stamp;
                mb.offer_primal(0, &DVector::from_element(1, s as f64), s);
                let after = mb.primal(0).unwrap();
                prop_assert!(after.stamp >= before);
                best = best.max(s);
                prop_assert_eq!(after.stamp, best);
                prop_assert_eq!(after.value[0], best as f64);
            }
        }
    }
}
