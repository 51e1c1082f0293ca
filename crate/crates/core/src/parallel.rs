/// Runs `f` on a dedicated pool of `workers` threads (`0` = rayon default).
///
/// Every parallel routine in this crate reduces in a fixed order, so the
/// worker count changes wall time only.
pub fn with_workers<T, F>(workers: usize, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    if workers == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(f)
}
