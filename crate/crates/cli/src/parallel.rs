//! Bounded scoped-thread execution of independent sub-tasks.

use std::sync::Mutex;

pub const THREADS_VAR: &str = "COLLAPSE_LAB_THREADS";

/// Thread budget from `COLLAPSE_LAB_THREADS`, defaulting to the available
/// parallelism.
pub fn thread_budget() -> Result<usize, String> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("{THREADS_VAR} must be a positive integer, got `{v}`")),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub type Task<'a, T> = Box<dyn FnOnce() -> T + Send + 'a>;

/// Runs `tasks` on at most `threads` workers; results keep the task order.
pub fn run_tasks<'a, T: Send>(threads: usize, tasks: Vec<Task<'a, T>>) -> Vec<T> {
    let workers = threads.min(tasks.len());
    if workers <= 1 {
        return tasks.into_iter().map(|task| task()).collect();
    }
    let slots: Vec<Mutex<Option<T>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let queue = Mutex::new(tasks.into_iter().enumerate());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let next = queue.lock().expect("task queue").next();
                let Some((i, task)) = next else { break };
                let out = task();
                *slots[i].lock().expect("result slot") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every task ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        for threads in [1, 2, 8] {
            let tasks: Vec<Task<usize>> = (0..10usize).map(|i| Box::new(move || i * i) as Task<usize>).collect();
            assert_eq!(run_tasks(threads, tasks), (0..10).map(|i| i * i).collect::<Vec<_>>());
        }
    }
}
