//! Work-stealing task pool used by the parallel GC phases.

use std::sync::atomic::{AtomicUsize, Ordering};

use crossbeam_deque::{Injector, Steal, Stealer, Worker};

/// Handle through which a task pushes follow-up work.
pub(crate) struct Local<'a, T> {
    worker: &'a Worker<T>,
}

impl<T> Local<'_, T> {
    #[inline]
    pub fn push(&self, task: T) {
        self.worker.push(task);
    }
}

struct Shared<T> {
    injector: Injector<T>,
    stealers: Vec<Stealer<T>>,
    idle: AtomicUsize,
    workers: usize,
}

impl<T> Shared<T> {
    fn steal(&self, local: &Worker<T>, me: usize) -> Option<T> {
        loop {
            let mut retry = false;
            match self.injector.steal_batch_and_pop(local) {
                Steal::Success(t) => return Some(t),
                Steal::Retry => retry = true,
                Steal::Empty => {}
            }
            for k in 1..self.workers {
                let victim = &self.stealers[(me + k) % self.workers];
                match victim.steal() {
                    Steal::Success(t) => return Some(t),
                    Steal::Retry => retry = true,
                    Steal::Empty => {}
                }
            }
            if !retry {
                return None;
            }
        }
    }

    fn has_work(&self) -> bool {
        !self.injector.is_empty() || self.stealers.iter().any(|s| !s.is_empty())
    }
}

/// Runs `f` over `seed` and every task it pushes on `workers` threads until
/// the pool drains. Each worker owns a state built by `init`; the states are
/// returned in worker order.
pub(crate) fn run<T, S, I, F>(workers: usize, seed: Vec<T>, init: I, f: F) -> Vec<S>
where
    T: Send,
    S: Send,
    I: Fn(usize) -> S + Sync,
    F: Fn(&mut S, &Local<'_, T>, T) + Sync,
{
    let workers = workers.max(1);
    let locals: Vec<Worker<T>> = (0..workers).map(|_| Worker::new_lifo()).collect();
    let shared = Shared {
        injector: Injector::new(),
        stealers: locals.iter().map(|w| w.stealer()).collect(),
        idle: AtomicUsize::new(0),
        workers,
    };
    for t in seed {
        shared.injector.push(t);
    }

    let work = |me: usize, local: Worker<T>| -> S {
        let mut state = init(me);
        let handle = Local { worker: &local };
        loop {
            if let Some(t) = local.pop().or_else(|| shared.steal(&local, me)) {
                f(&mut state, &handle, t);
                continue;
            }
            shared.idle.fetch_add(1, Ordering::SeqCst);
            loop {
                if shared.idle.load(Ordering::SeqCst) == workers {
                    return state;
                }
                if shared.has_work() {
                    shared.idle.fetch_sub(1, Ordering::SeqCst);
                    break;
                }
                std::thread::yield_now();
            }
        }
    };

    if workers == 1 {
        let local = locals.into_iter().next().expect("one worker");
        return vec![work(0, local)];
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = locals
            .into_iter()
            .enumerate()
            .map(|(i, local)| {
                let work = &work;
                scope.spawn(move || work(i, local))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("gc worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn processes_every_spawned_task_once() {
        for workers in [1, 2, 4, 8] {
            // Each task n > 0 spawns n-1 twice: a binary tree of 2^12 - 1 nodes.
            let states = run(
                workers,
                vec![12u32],
                |_| 0usize,
                |count, local, n| {
                    *count += 1;
                    if n > 1 {
                        local.push(n - 1);
                        local.push(n - 1);
                    }
                },
            );
            assert_eq!(states.iter().sum::<usize>(), (1 << 12) - 1);
        }
    }

    #[test]
    fn empty_seed_terminates() {
        let states = run(4, Vec::<u32>::new(), |_| 0usize, |c, _, _| *c += 1);
        assert_eq!(states, vec![0; 4]);
    }
}
