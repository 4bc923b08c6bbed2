//! Library side of the `llglab` command-line tool: the command drivers,
//! run manifests, and canonical output rendering. The binary in
//! `main.rs` is a thin argument-parsing shell over these.

pub mod manifest;
pub mod output;
pub mod runner;
pub mod table;

/// Worker cap from the environment; call once at startup.
pub fn init_thread_pool() {
    if let Ok(raw) = std::env::var("LLGLAB_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
