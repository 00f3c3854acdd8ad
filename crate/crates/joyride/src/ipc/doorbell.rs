//! Per-client wakeup primitive: signal/wait with no payload. Clients that
//! prefer latency busy-poll their rings instead; blocking clients sleep here.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, Default)]
pub struct Doorbell {
    inner: Arc<(Mutex<u64>, Condvar)>,
}

impl Doorbell {
    pub fn new() -> Doorbell {
        Doorbell::default()
    }

    /// Wakes any waiter. Signals coalesce: N signals before a wait cause at
    /// most one wakeup.
    pub fn signal(&self) {
        let (lock, cv) = &*self.inner;
        *lock.lock().unwrap() += 1;
        cv.notify_all();
    }

    /// Blocks until a signal arrives or the timeout elapses. Returns true if
    /// signalled. A signal that raced ahead of the wait is not lost.
    pub fn wait(&self, timeout: Duration) -> bool {
        let (lock, cv) = &*self.inner;
        let pending = lock.lock().unwrap();
        let (mut pending, result) = cv
            .wait_timeout_while(pending, timeout, |p| *p == 0)
            .unwrap();
        if *pending > 0 {
            *pending = 0;
            return true;
        }
        !result.timed_out()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_wakes_waiter() {
        let bell = Doorbell::new();
        let remote = bell.clone();
        let t = std::thread::spawn(move || remote.wait(Duration::from_secs(5)));
        std::thread::sleep(Duration::from_millis(20));
        bell.signal();
        assert!(t.join().unwrap());
    }

    #[test]
    fn wait_times_out_without_signal() {
        let bell = Doorbell::new();
        assert!(!bell.wait(Duration::from_millis(10)));
    }

    #[test]
    fn prior_signal_is_not_lost() {
        let bell = Doorbell::new();
        bell.signal();
        assert!(bell.wait(Duration::from_millis(10)));
    }
}
