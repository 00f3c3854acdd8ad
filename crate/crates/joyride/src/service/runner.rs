//! Drives a service's poll loop on a dedicated thread with the real clock.
//! If an iteration reports zero work the thread naps one tick; otherwise it
//! spins straight into the next pass.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::Service;
use crate::util::now_micros;

pub struct ServiceRunner {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    pub service: Arc<Mutex<Service>>,
}

impl ServiceRunner {
    pub fn spawn(service: Service) -> ServiceRunner {
        let tick = Duration::from_micros(service.config().tick_us);
        let service = Arc::new(Mutex::new(service));
        let stop = Arc::new(AtomicBool::new(false));
        let svc = service.clone();
        let stop_flag = stop.clone();
        let handle = std::thread::Builder::new()
            .name("joyride-service".into())
            .spawn(move || {
                while !stop_flag.load(Ordering::Relaxed) {
                    let work = svc.lock().unwrap().iteration(now_micros());
                    if work == 0 {
                        std::thread::sleep(tick);
                    }
                }
            })
            .expect("spawn service thread");
        ServiceRunner {
            stop,
            handle: Some(handle),
            service,
        }
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServiceRunner {
    fn drop(&mut self) {
        self.stop();
    }
}
