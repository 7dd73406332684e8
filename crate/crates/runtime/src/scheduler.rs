//! Due-time bookkeeping for one service loop.
//!
//! Keepalive wins over periodic work, which wins over queued adhoc
//! requests. Periodic jobs are fixed-rate: the k-th run is due at
//! `start + k·period` counting from zero, so state is fresh right after
//! `on_connect` and the count over a window does not drift with execution
//! time. Keepalives first fire one period after start.

use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Keepalive(String),
    Periodic(String),
    Adhoc,
    /// Nothing is due; sleep until the given instant (or a new request).
    Idle(Option<Instant>),
}

#[derive(Debug, Clone)]
struct Job {
    primitive: String,
    period: Duration,
    due: Instant,
}

impl Job {
    fn new(primitive: &str, period: Duration, first: Instant) -> Self {
        Self {
            primitive: primitive.to_string(),
            period,
            due: first,
        }
    }

    /// Advances to the next slot. A job that fell a whole period behind
    /// skips the missed slots instead of firing a burst.
    fn advance(&mut self, now: Instant) {
        self.due += self.period;
        while self.due <= now {
            self.due += self.period;
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Scheduler {
    keepalive: Option<Job>,
    periodic: Vec<Job>,
}

impl Scheduler {
    pub fn new(keepalive: Option<(&str, Duration)>, periodic: &[(&str, Duration)], start: Instant) -> Self {
        Self {
            keepalive: keepalive.map(|(p, d)| Job::new(p, d, start + d)),
            periodic: periodic.iter().map(|(p, d)| Job::new(p, *d, start)).collect(),
        }
    }

    pub fn next_action(&mut self, now: Instant, adhoc_pending: bool) -> Action {
        if let Some(k) = &mut self.keepalive {
            if k.due <= now {
                k.advance(now);
                return Action::Keepalive(k.primitive.clone());
            }
        }
        let earliest = self.periodic.iter_mut().filter(|j| j.due <= now).min_by_key(|j| j.due);
        if let Some(j) = earliest {
            j.advance(now);
            return Action::Periodic(j.primitive.clone());
        }
        if adhoc_pending {
            return Action::Adhoc;
        }
        Action::Idle(self.next_due())
    }

    pub fn next_due(&self) -> Option<Instant> {
        self.keepalive.iter().chain(&self.periodic).map(|j| j.due).min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: Duration = Duration::from_millis(1);

    #[test]
    fn priority_when_everything_is_due() {
        let t0 = Instant::now();
        let mut s = Scheduler::new(Some(("ka", 100 * MS)), &[("poll", 100 * MS)], t0);
        let now = t0 + 100 * MS;
        assert_eq!(s.next_action(now, true), Action::Keepalive("ka".into()));
        assert_eq!(s.next_action(now, true), Action::Periodic("poll".into()));
        assert_eq!(s.next_action(now, true), Action::Adhoc);
        assert_eq!(s.next_action(now, false), Action::Idle(Some(t0 + 200 * MS)));
    }

    #[test]
    fn fixed_rate_count() {
        let t0 = Instant::now();
        let mut s = Scheduler::new(None, &[("poll", 100 * MS)], t0);
        let mut runs = 0;
        // simulate a loop that wakes every 7 ms for 5 s
        let mut t = t0;
        while t <= t0 + 5000 * MS {
            while let Action::Periodic(_) = s.next_action(t, false) {
                runs += 1;
            }
            t += 7 * MS;
        }
        assert!((49..=51).contains(&runs), "{runs}");
    }

    #[test]
    fn late_job_skips_missed_slots() {
        let t0 = Instant::now();
        let mut s = Scheduler::new(None, &[("poll", 100 * MS)], t0);
        let late = t0 + 1050 * MS;
        assert_eq!(s.next_action(late, false), Action::Periodic("poll".into()));
        assert_eq!(s.next_action(late, false), Action::Idle(Some(t0 + 1100 * MS)));
    }

    #[test]
    fn earliest_periodic_first() {
        let t0 = Instant::now();
        let mut s = Scheduler::new(None, &[("slow", 300 * MS), ("fast", 100 * MS)], t0);
        assert_eq!(s.next_action(t0, false), Action::Periodic("slow".into()));
        assert_eq!(s.next_action(t0, false), Action::Periodic("fast".into()));
        let now = t0 + 300 * MS;
        assert_eq!(s.next_action(now, false), Action::Periodic("fast".into()));
        assert_eq!(s.next_action(now, false), Action::Periodic("slow".into()));
        assert_eq!(s.next_action(now, false), Action::Idle(Some(t0 + 400 * MS)));
    }

    #[test]
    fn periodic_fires_at_start() {
        let t0 = Instant::now();
        let mut s = Scheduler::new(Some(("ka", 500 * MS)), &[("poll", 100 * MS)], t0);
        assert_eq!(s.next_action(t0, true), Action::Periodic("poll".into()));
        assert_eq!(s.next_action(t0, false), Action::Idle(Some(t0 + 100 * MS)));
    }

    #[test]
    fn empty_scheduler_idles_forever() {
        let mut s = Scheduler::default();
        assert_eq!(s.next_action(Instant::now(), false), Action::Idle(None));
    }
}
