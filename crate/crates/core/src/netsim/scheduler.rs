//! Round-robin RB allocation over two fixed pools.
//!
//! Each TTI the users are visited starting from a rotating offset (advanced
//! by one user per TTI). A visited user with a queued packet receives
//! consecutive RBs until the head packet is covered; a packet is only sent
//! when it fits whole in the RBs left this TTI. Visits repeat until the pool
//! is exhausted or no queued packet fits. Expired packets are removed before
//! allocation.

use std::collections::VecDeque;

use super::traffic::{Packet, PacketKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Haptic,
    Video,
}

#[derive(Debug, Clone, Default)]
pub struct UserQueues {
    pub haptic: VecDeque<Packet>,
    pub video: VecDeque<Packet>,
}

impl UserQueues {
    fn queue(&mut self, pool: Pool) -> &mut VecDeque<Packet> {
        match pool {
            Pool::Haptic => &mut self.haptic,
            Pool::Video => &mut self.video,
        }
    }

    pub fn queued_samples(&self) -> usize {
        self.haptic.iter().map(Packet::n_samples).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub user: usize,
    pub rbs: usize,
    pub packet: Packet,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TtiReport {
    pub haptic_tx: Vec<Transmission>,
    pub video_tx: Vec<Transmission>,
    /// Packets removed for missing their deadline.
    pub dropped: Vec<Packet>,
    pub haptic_rbs_used: usize,
    pub video_rbs_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSizes {
    pub haptic: usize,
    pub video: usize,
}

fn expire(queue: &mut VecDeque<Packet>, now: u64, dropped: &mut Vec<Packet>) {
    // Deadlines are nondecreasing along each queue.
    while queue.front().is_some_and(|p| p.deadline <= now) {
        dropped.push(queue.pop_front().expect("front checked"));
    }
}

fn serve_pool<F>(
    users: &mut [UserQueues],
    pool: Pool,
    size: usize,
    offset: usize,
    payload: &F,
    out: &mut Vec<Transmission>,
) -> usize
where
    F: Fn(usize) -> u32,
{
    let n = users.len();
    let mut left = size;
    while left > 0 {
        let mut progress = false;
        for i in 0..n {
            if left == 0 {
                break;
            }
            let u = (offset + i) % n;
            let q = users[u].queue(pool);
            let Some(head) = q.front() else { continue };
            let s_rb = payload(u);
            if s_rb == 0 {
                continue;
            }
            let need = head.size.div_ceil(s_rb) as usize;
            if need > left {
                continue;
            }
            left -= need;
            let packet = q.pop_front().expect("front checked");
            out.push(Transmission {
                user: u,
                rbs: need,
                packet,
            });
            progress = true;
        }
        if !progress {
            break;
        }
    }
    size - left
}

/// Expire, then allocate both pools for TTI `now`. `payload(user)` is the
/// RB payload in bytes for that user in this TTI.
pub fn schedule_tti<F>(users: &mut [UserQueues], pools: PoolSizes, now: u64, payload: F) -> TtiReport
where
    F: Fn(usize) -> u32,
{
    let mut report = TtiReport::default();
    for q in users.iter_mut() {
        expire(&mut q.haptic, now, &mut report.dropped);
        expire(&mut q.video, now, &mut report.dropped);
    }
    if users.is_empty() {
        return report;
    }
    let offset = (now % users.len() as u64) as usize;
    report.haptic_rbs_used = serve_pool(
        users,
        Pool::Haptic,
        pools.haptic,
        offset,
        &payload,
        &mut report.haptic_tx,
    );
    report.video_rbs_used = serve_pool(
        users,
        Pool::Video,
        pools.video,
        offset,
        &payload,
        &mut report.video_tx,
    );
    debug_assert!(report.dropped.iter().all(|p| p.deadline <= now));
    debug_assert!(report
        .haptic_tx
        .iter()
        .all(|t| t.packet.kind == PacketKind::HapticBatch));
    report
}
