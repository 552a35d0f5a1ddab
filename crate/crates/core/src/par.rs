//! Task fan-out for independent replications.
//!
//! With the `parallel` feature (default) tasks run on the rayon pool;
//! without it they run in order on the calling thread. Both produce
//! results in task order.

pub fn run_tasks_sequential<T, R, F>(tasks: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    tasks.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn run_tasks_parallel<T, R, F>(tasks: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    tasks.par_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn run_tasks<T, R, F>(tasks: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    run_tasks_parallel(tasks, f)
}

#[cfg(not(feature = "parallel"))]
pub fn run_tasks<T, R, F>(tasks: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    run_tasks_sequential(tasks, f)
}
