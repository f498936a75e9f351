//! The tick loop.
//!
//! Each tick: take the configuration as the snapshot, run one segment of
//! every due process against it in `(world, entity, process)` order, expand
//! and bucket the updates, commit with [`apply_all`], then retire finished
//! processes and respawn those that asked to continue.
//!
//! Committed updates feed a replay hash chain,
//! `H(t+1) = SHA-256(H(t) || lines)`, one line `"{tick}\t{emitter}\t{update}\n"`
//! per committed update in commit order, starting from 32 zero bytes. Two runs
//! agree iff their chains agree.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::model::{Configuration, Cursor, Path, Process, ProcessState, Tick};
use crate::semantics::{Next, SemanticsHost};
use crate::trace::{hex, TraceEvent, TraceSink};
use crate::update::{
    apply_all, expand_update, into_buckets, BucketEntry, ConflictPolicy, DroppedUpdate, ResultStructure, TickAborted,
};

/// What one tick did.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickReport {
    /// The tick that ran; the configuration is now at `tick + 1`.
    pub tick: Tick,
    pub segments: usize,
    pub committed: Vec<BucketEntry>,
    pub dropped: Vec<DroppedUpdate>,
    pub finished: Vec<Path>,
    pub respawned: Vec<Path>,
    /// Processes that existed at tick open and are gone without finishing:
    /// faulted, cancelled by an update, or removed with their entity/world.
    pub cancelled: Vec<Path>,
    /// Processes that did not exist at tick open.
    pub started: Vec<Path>,
    pub aborted: Option<TickAborted>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    TickLimit,
    /// No process left.
    Quiescent,
    Aborted(TickAborted),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub ticks: u64,
    pub stop: StopReason,
}

pub struct Engine {
    pub config: Configuration,
    pub host: SemanticsHost,
    pub policy: ConflictPolicy,
    chain: [u8; 32],
}

fn process_paths(c: &Configuration) -> BTreeSet<Path> {
    c.processes()
        .map(|(w, e, p)| Path::property(w.clone(), e.clone(), p.name.clone()))
        .collect()
}

impl Engine {
    pub fn new(config: Configuration, host: SemanticsHost, policy: ConflictPolicy) -> Self {
        Engine {
            config,
            host,
            policy,
            chain: [0; 32],
        }
    }

    pub fn tick(&self) -> Tick {
        self.config.tick
    }

    pub fn replay_hash(&self) -> [u8; 32] {
        self.chain
    }

    /// Restores the chain when resuming from a snapshot.
    pub fn set_replay_hash(&mut self, hash: [u8; 32]) {
        self.chain = hash;
    }

    /// Runs one tick. On an aborted tick the configuration is left as it
    /// was at tick open and `report.aborted` is set.
    pub fn step(&mut self, sink: &mut dyn TraceSink) -> TickReport {
        let snapshot = core::mem::take(&mut self.config);
        let tick = snapshot.tick;
        sink.event(&TraceEvent::TickOpen { tick });
        let mut next = snapshot.clone();
        let mut report = TickReport {
            tick,
            ..TickReport::default()
        };
        let mut entries: Vec<BucketEntry> = Vec::new();
        let mut finished_now: Vec<Path> = Vec::new();

        let due: Vec<(Path, Option<Cursor>)> = snapshot
            .processes()
            .filter_map(|(w, e, p)| {
                let cursor = match &p.state {
                    ProcessState::Ready => None,
                    ProcessState::Suspended { resume_tick, cursor } if *resume_tick <= tick => Some(cursor.clone()),
                    ProcessState::Awaiting { target, cursor } if snapshot.recently_finished.contains(target) => {
                        Some(cursor.clone())
                    }
                    _ => return None,
                };
                Some((Path::property(w.clone(), e.clone(), p.name.clone()), cursor))
            })
            .collect();

        for (path, cursor) in due {
            report.segments += 1;
            let (w, e, pn) = (
                &path.world,
                path.entity.as_ref().expect("3"),
                path.property.as_ref().expect("3"),
            );
            let entity = snapshot.entity(w, e).expect("due process exists");
            let process = &entity.processes[pn];
            sink.event(&TraceEvent::SegmentRun {
                tick,
                process: path.clone(),
                iteration: process.iteration,
            });
            let outcome = match entity.transitions.get(&process.transition) {
                None => Err(format!("transition `{}` does not exist", process.transition)),
                Some(t) => self
                    .host
                    .run_segment(&snapshot, &path, process, t, cursor.as_ref())
                    .map_err(|f| f.to_string()),
            };
            let outcome = outcome.and_then(|o| {
                let mut expanded = Vec::new();
                for u in &o.updates {
                    let xs = expand_update(u, &path, &snapshot, self.host.macros()).map_err(|e| e.to_string())?;
                    expanded.extend(xs);
                }
                Ok((o, expanded))
            });
            let slot = next
                .entity_mut(w, e)
                .and_then(|x| x.processes.get_mut(pn))
                .expect("next starts as a copy of the snapshot");
            match outcome {
                Err(reason) => {
                    next.entity_mut(w, e).expect("exists").processes.remove(pn);
                    sink.event(&TraceEvent::ProcessCancelled {
                        tick,
                        process: path.clone(),
                        reason,
                    });
                }
                Ok((o, expanded)) => {
                    match o.next {
                        Next::SuspendUntil { resume_tick, cursor } => {
                            sink.event(&TraceEvent::ProcessSuspended {
                                tick,
                                process: path.clone(),
                                resume_tick,
                            });
                            slot.state = ProcessState::Suspended { resume_tick, cursor };
                        }
                        Next::Await { target, cursor } => {
                            sink.event(&TraceEvent::ProcessAwaiting {
                                tick,
                                process: path.clone(),
                                target: target.clone(),
                            });
                            slot.state = ProcessState::Awaiting { target, cursor };
                        }
                        Next::Finished { cont } => {
                            sink.event(&TraceEvent::ProcessFinished {
                                tick,
                                process: path.clone(),
                                cont,
                            });
                            slot.state = ProcessState::FinishedPending {
                                result: ResultStructure {
                                    updates: o.updates,
                                    cont,
                                },
                            };
                            finished_now.push(path.clone());
                        }
                    }
                    entries.extend(expanded.into_iter().enumerate().map(|(seq, update)| BucketEntry {
                        emitter: path.clone(),
                        seq: seq as u32,
                        update,
                    }));
                }
            }
        }

        let buckets = into_buckets(entries);
        let (mut config, bucket_report) = match apply_all(next, &buckets, &snapshot, self.policy) {
            Ok(r) => r,
            Err(abort) => {
                sink.event(&TraceEvent::TickAborted {
                    tick,
                    conflicts: abort.conflicts.len(),
                });
                report.aborted = Some(abort);
                self.config = snapshot;
                return report;
            }
        };

        // retire finished processes
        let next_tick = tick + 1;
        for path in &finished_now {
            let (w, e, pn) = (
                &path.world,
                path.entity.as_ref().expect("3"),
                path.property.as_ref().expect("3"),
            );
            let Some(ent) = config.entity_mut(w, e) else { continue };
            let Some(old) = ent.processes.remove(pn) else { continue };
            let ProcessState::FinishedPending { result } = &old.state else {
                // restarted by an update this tick; keep the new state
                ent.processes.insert(pn.clone(), old);
                continue;
            };
            if result.cont && ent.transitions.contains_key(&old.transition) {
                let iteration = old.iteration + 1;
                ent.processes.insert(
                    pn.clone(),
                    Process::ready(pn.clone(), old.transition.clone(), next_tick, iteration),
                );
                report.respawned.push(path.clone());
                sink.event(&TraceEvent::ProcessRespawned {
                    tick,
                    process: path.clone(),
                    iteration,
                });
            }
        }
        config.recently_finished = finished_now.iter().cloned().collect();

        let before = process_paths(&snapshot);
        let after = process_paths(&config);
        report.cancelled = before
            .iter()
            .filter(|p| !after.contains(*p) && !finished_now.contains(p))
            .cloned()
            .collect();
        report.started = after.difference(&before).cloned().collect();
        report.finished = finished_now;

        let mut lines = String::new();
        for entry in &bucket_report.committed {
            let update = entry.update.to_string();
            lines.push_str(&format!("{tick}\t{}\t{update}\n", entry.emitter));
            sink.event(&TraceEvent::UpdateCommitted {
                tick,
                emitter: entry.emitter.clone(),
                seq: entry.seq,
                update,
            });
        }
        for d in &bucket_report.dropped {
            sink.event(&TraceEvent::UpdateDropped {
                tick,
                emitter: d.entry.emitter.clone(),
                seq: d.entry.seq,
                update: d.entry.update.to_string(),
                reason: d.reason,
            });
        }
        let mut h = Sha256::new();
        h.update(self.chain);
        h.update(lines.as_bytes());
        self.chain = h.finalize().into();

        sink.event(&TraceEvent::TickClose {
            tick,
            committed: bucket_report.committed.len(),
            dropped: bucket_report.dropped.len(),
            hash: hex(&self.chain),
        });
        report.committed = bucket_report.committed;
        report.dropped = bucket_report.dropped;
        self.config = config;
        report
    }

    /// Runs up to `max_ticks` ticks, stopping early when no process is left
    /// (after at least one tick) or a tick aborts.
    pub fn run(&mut self, max_ticks: u64, sink: &mut dyn TraceSink) -> RunSummary {
        let mut ticks = 0;
        while ticks < max_ticks {
            if ticks > 0 && self.config.process_count() == 0 {
                return RunSummary {
                    ticks,
                    stop: StopReason::Quiescent,
                };
            }
            let report = self.step(sink);
            if let Some(abort) = report.aborted {
                return RunSummary {
                    ticks,
                    stop: StopReason::Aborted(abort),
                };
            }
            ticks += 1;
        }
        RunSummary {
            ticks,
            stop: StopReason::TickLimit,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Entity, TransitionDescription, World};
    use crate::name::name;
    use crate::trace::NullSink;
    use crate::value::Value;

    fn engine(transitions: &[(&str, &str)], processes: &[(&str, &str)]) -> Engine {
        let mut e = Entity::default();
        e.data.insert(name("n"), Value::Int(0));
        for (t, src) in transitions {
            e.transitions
                .insert(name(t), TransitionDescription::new(name(t), name("tdl"), src));
        }
        for (p, t) in processes {
            e.processes.insert(name(p), Process::ready(name(p), name(t), 0, 0));
        }
        let mut w = World::default();
        w.entities.insert(name("a"), e);
        let mut c = Configuration::new();
        c.worlds.insert(name("w"), w);
        Engine::new(c, SemanticsHost::new(1), ConflictPolicy::LastWriterWins)
    }

    #[test]
    fn counter_respawns_every_tick() {
        let mut eng = engine(&[("inc", "return { set_data me.n = me.n + 1 }")], &[("count", "inc")]);
        eng.run(5, &mut NullSink);
        assert_eq!(eng.config.data("w", "a", "n"), Some(&Value::Int(5)));
        assert_eq!(eng.config.process("w", "a", "count").unwrap().iteration, 5);
        assert_eq!(eng.tick(), 5);
    }

    #[test]
    fn wait_suspends_then_resumes() {
        let mut eng = engine(
            &[("slow", "wait 3 return stop { set_data me.n = 7 }")],
            &[("p", "slow")],
        );
        let r = eng.step(&mut NullSink);
        assert!(r.committed.is_empty());
        assert!(matches!(
            eng.config.process("w", "a", "p").unwrap().state,
            ProcessState::Suspended { resume_tick: 3, .. }
        ));
        let s = eng.run(10, &mut NullSink);
        assert_eq!(s.stop, StopReason::Quiescent);
        assert_eq!(eng.config.data("w", "a", "n"), Some(&Value::Int(7)));
        assert_eq!(eng.tick(), 4);
    }

    #[test]
    fn faults_cancel_the_process_and_drop_its_updates() {
        let mut eng = engine(
            &[("bad", "emit { set_data me.n = 9 } wait me.missing")],
            &[("p", "bad")],
        );
        let r = eng.step(&mut NullSink);
        assert_eq!(r.cancelled.len(), 1);
        assert!(r.committed.is_empty());
        assert_eq!(eng.config.data("w", "a", "n"), Some(&Value::Int(0)));
        assert_eq!(eng.config.process_count(), 0);
    }

    #[test]
    fn await_wakes_after_target_finishes() {
        let mut eng = engine(
            &[
                ("waiter", "await me.worker return stop { set_data me.n = me.n * 10 }"),
                ("work", "wait 2 return stop { set_data me.n = 4 }"),
            ],
            &[("a_wait", "waiter"), ("worker", "work")],
        );
        eng.run(10, &mut NullSink);
        assert_eq!(eng.config.data("w", "a", "n"), Some(&Value::Int(40)));
    }

    #[test]
    fn hash_chain_depends_on_history() {
        let mut a = engine(&[("inc", "return { set_data me.n = me.n + 1 }")], &[("count", "inc")]);
        let mut b = engine(&[("inc", "return { set_data me.n = me.n + 2 }")], &[("count", "inc")]);
        let mut c = engine(&[("inc", "return { set_data me.n = me.n + 1 }")], &[("count", "inc")]);
        a.run(3, &mut NullSink);
        b.run(3, &mut NullSink);
        c.run(3, &mut NullSink);
        assert_eq!(a.replay_hash(), c.replay_hash());
        assert_ne!(a.replay_hash(), b.replay_hash());
    }
}
