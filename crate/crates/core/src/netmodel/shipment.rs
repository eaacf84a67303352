use super::NetError;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shipment {
    pub send_time: i64,
    pub source: usize,
    pub destination: usize,
    pub mot: usize,
    pub quantity: f64,
    pub lead_time: u32,
}

impl Shipment {
    pub fn arrival(&self) -> i64 {
        self.send_time + i64::from(self.lead_time)
    }
}

/// Which shipments count as already sent when predicting arrivals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SendWindow {
    /// `send_time < t`: supply committed before interval `t` starts.
    Before(i64),
    /// `send_time <= t`: also counts zero-lead-time supply sent during `t`.
    UpTo(i64),
}

impl SendWindow {
    fn admits(self, send_time: i64) -> bool {
        match self {
            SendWindow::Before(t) => send_time < t,
            SendWindow::UpTo(t) => send_time <= t,
        }
    }
}

/// Append-only record of shipments in a network of `node_count` nodes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShipmentLog {
    node_count: usize,
    records: Vec<Shipment>,
}

impl ShipmentLog {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            records: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn push(&mut self, s: Shipment) -> Result<(), NetError> {
        if s.source >= self.node_count || s.destination >= self.node_count {
            return Err(NetError::UnknownNode(s.source.max(s.destination)));
        }
        if !(s.quantity >= 0.0) || !s.quantity.is_finite() {
            return Err(NetError::NegativeQuantity(s.quantity));
        }
        self.records.push(s);
        Ok(())
    }

    pub fn records(&self) -> &[Shipment] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `S_v^{j|t}`: quantity arriving at `node` exactly at `receive_time`
    /// from shipments admitted by `window`.
    pub fn incoming_supply(&self, node: usize, receive_time: i64, window: SendWindow) -> Result<f64, NetError> {
        if node >= self.node_count {
            return Err(NetError::UnknownNode(node));
        }
        Ok(self
            .records
            .iter()
            .filter(|s| s.destination == node && window.admits(s.send_time) && s.arrival() == receive_time)
            .map(|s| s.quantity)
            .sum())
    }

    /// Quantity shipped at or before `t` that arrives after `t`.
    pub fn in_transit_after(&self, t: i64) -> f64 {
        self.records
            .iter()
            .filter(|s| s.send_time <= t && s.arrival() > t)
            .map(|s| s.quantity)
            .sum()
    }

    /// Records still relevant at interval `t`: sent before `t` and arriving at or after it.
    pub fn pending_at(&self, t: i64) -> ShipmentLog {
        ShipmentLog {
            node_count: self.node_count,
            records: self
                .records
                .iter()
                .filter(|s| s.send_time < t && s.arrival() >= t)
                .cloned()
                .collect(),
        }
    }

    pub fn total_sent(&self) -> f64 {
        self.records.iter().map(|s| s.quantity).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ship(send: i64, dst: usize, qty: f64, lead: u32) -> Shipment {
        Shipment {
            send_time: send,
            source: 0,
            destination: dst,
            mot: 0,
            quantity: qty,
            lead_time: lead,
        }
    }

    #[test]
    fn single_record_matches_only_its_arrival() {
        let mut log = ShipmentLog::new(2);
        log.push(ship(3, 1, 5.0, 2)).unwrap();
        assert_eq!(log.incoming_supply(1, 5, SendWindow::Before(4)).unwrap(), 5.0);
        assert_eq!(log.incoming_supply(1, 4, SendWindow::Before(4)).unwrap(), 0.0);
    }

    #[test]
    fn overlapping_records_brute_force() {
        let mut log = ShipmentLog::new(2);
        log.push(ship(4, 1, 2.0, 0)).unwrap();
        log.push(ship(4, 1, 3.0, 1)).unwrap();
        log.push(ship(4, 1, 7.0, 1)).unwrap();
        // brute force over every record
        let expect: f64 = log
            .records()
            .iter()
            .filter(|s| s.send_time + s.lead_time as i64 == 5)
            .map(|s| s.quantity)
            .sum();
        assert_eq!(expect, 10.0);
        assert_eq!(log.incoming_supply(1, 5, SendWindow::UpTo(4)).unwrap(), expect);
        // zero-lead supply only counts when the window includes the send interval
        assert_eq!(log.incoming_supply(1, 4, SendWindow::Before(4)).unwrap(), 0.0);
        assert_eq!(log.incoming_supply(1, 4, SendWindow::UpTo(4)).unwrap(), 2.0);
    }

    #[test]
    fn unknown_node_is_an_error() {
        let log = ShipmentLog::new(2);
        assert!(matches!(
            log.incoming_supply(5, 0, SendWindow::Before(0)),
            Err(NetError::UnknownNode(5))
        ));
    }

    #[test]
    fn every_shipment_is_received_exactly_once() {
        let mut log = ShipmentLog::new(3);
        let mut sent = 0.0;
        for t in 0..10i64 {
            let q = (t as f64 * 1.7) % 5.0;
            sent += q;
            log.push(Shipment {
                send_time: t,
                source: 0,
                destination: 1 + (t as usize % 2),
                mot: 0,
                quantity: q,
                lead_time: (t % 3) as u32,
            })
            .unwrap();
        }
        let mut received = 0.0;
        for v in 0..3 {
            for j in 0..20 {
                received += log.incoming_supply(v, j, SendWindow::UpTo(j)).unwrap();
            }
        }
        assert!((received - sent).abs() < 1e-12);
    }
}
