//! Server-side protocol state machine.
//!
//! The server is transport-agnostic: it consumes messages plus timestamps and
//! emits [`ServerEffect`]s (sends, deadline arming, round records). A driver
//! — the discrete-event simulator or the TCP server loop — realizes those
//! effects and feeds back elapsed time. This keeps round semantics identical
//! across simulated and live runs.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{aggregate, evaluate, Dataset, ParameterVector};
use crate::protocol::job::{DispatchScope, Job, Weighting};
use crate::protocol::messages::{ClientId, Message};
use crate::protocol::policy::ParticipationPolicy;
use crate::protocol::record::{ClientRoundRecord, Decision, RoundRecord};

/// Produces the global-model accuracy after each aggregation.
pub trait GlobalEvaluator {
    fn evaluate(&mut self, params: &ParameterVector) -> Result<f64>;
}

/// Evaluates parameters on a held-out test set.
pub struct DatasetEvaluator {
    pub test_set: Dataset,
}

impl GlobalEvaluator for DatasetEvaluator {
    fn evaluate(&mut self, params: &ParameterVector) -> Result<f64> {
        evaluate(params, &self.test_set)
    }
}

/// Replays a fixed accuracy sequence; used to drive hand-computed round
/// traces in tests without any real training. The first entry is consumed at
/// server construction (the initial model's accuracy); each aggregation
/// consumes one more. Carried-over rounds (no uploads) consume nothing.
pub struct ScriptedEvaluator {
    accs: Vec<f64>,
    next: usize,
}

impl ScriptedEvaluator {
    pub fn new(accs: Vec<f64>) -> Self {
        ScriptedEvaluator { accs, next: 0 }
    }
}

impl GlobalEvaluator for ScriptedEvaluator {
    fn evaluate(&mut self, _params: &ParameterVector) -> Result<f64> {
        let v = self.accs.get(self.next).copied().ok_or_else(|| {
            Error::validation(format!(
                "scripted evaluator exhausted after {} evaluations",
                self.next
            ))
        })?;
        self.next += 1;
        Ok(v)
    }
}

/// Instructions the protocol hands back to its driver.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerEffect {
    /// Deliver a message to a client.
    Send { to: ClientId, message: Message },
    /// Arm (or re-arm) the round deadline timer.
    SetDeadline { round: u32, at: f64 },
    /// A round finished; append to the run ledger. `dispatch_time` is filled
    /// with the close time; the driver overwrites it once the post-round
    /// sends have been delivered.
    Record(RoundRecord),
    /// All rounds have run; the job is complete.
    JobComplete,
}

/// Compute the next waiting time from reported training times: their mean,
/// or `fallback` (the waiting time in force) when no reports exist yet.
pub fn update_waiting_time(reported: &[f64], fallback: f64) -> Result<f64> {
    if !fallback.is_finite() || fallback <= 0.0 {
        return Err(Error::validation(format!(
            "fallback waiting time must be positive and finite, got {fallback}"
        )));
    }
    if reported.is_empty() {
        return Ok(fallback);
    }
    let mut sum = 0.0;
    for &t in reported {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::validation(format!(
                "reported training times must be positive and finite, got {t}"
            )));
        }
        sum += t;
    }
    Ok(sum / reported.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Constructed, round 1 not yet opened.
    Idle,
    /// A round is accepting decisions.
    Open,
    /// A round closed; waiting for the driver to finish dispatch and open the
    /// next round.
    Closed,
    /// All rounds have run.
    Done,
}

struct Registered {
    dataset_size: u64,
}

/// One buffered message addressed to a round that has not opened yet.
struct Buffered {
    from: ClientId,
    message: Message,
    transfer_time: f64,
}

/// The dynamic-fusion server: accuracy-gated uploads, adaptive waiting-time
/// deadlines, per-round records.
pub struct ServerProtocol {
    job: Job,
    policy: ParticipationPolicy,
    expected_clients: usize,
    evaluator: Box<dyn GlobalEvaluator>,

    phase: Phase,
    round: u32,
    opened_at: f64,
    deadline: f64,
    /// Waiting time in force for the currently open round (and the fallback
    /// for the next one).
    waiting_time: f64,

    global: ParameterVector,
    max_acc: f64,

    clients: BTreeMap<ClientId, Registered>,
    disconnected: BTreeSet<ClientId>,

    /// Latest reported training time per client, carried across rounds.
    times_table: BTreeMap<ClientId, f64>,
    /// Reports stamped with the current round, for the round record.
    round_reports: BTreeMap<ClientId, f64>,
    /// Uploads accepted this round: params and aggregation weight.
    received: BTreeMap<ClientId, (ParameterVector, f64)>,
    decisions: BTreeMap<ClientId, Decision>,
    local_accs: BTreeMap<ClientId, f64>,
    upload_times: BTreeMap<ClientId, f64>,
    /// Messages stamped with a round that has not opened yet.
    future: BTreeMap<u32, Vec<Buffered>>,
    rounds_recorded: u32,
}

impl ServerProtocol {
    pub fn new(
        job: Job,
        policy: ParticipationPolicy,
        expected_clients: usize,
        mut evaluator: Box<dyn GlobalEvaluator>,
    ) -> Result<Self> {
        job.validate()?;
        if expected_clients == 0 {
            return Err(Error::validation("expected_clients must be at least 1"));
        }
        let max_acc = evaluator.evaluate(&job.initial_params)?;
        let waiting_time = job.initial_waiting_time;
        let global = job.initial_params.clone();
        Ok(ServerProtocol {
            job,
            policy,
            expected_clients,
            evaluator,
            phase: Phase::Idle,
            round: 0,
            opened_at: 0.0,
            deadline: 0.0,
            waiting_time,
            global,
            max_acc,
            clients: BTreeMap::new(),
            disconnected: BTreeSet::new(),
            times_table: BTreeMap::new(),
            round_reports: BTreeMap::new(),
            received: BTreeMap::new(),
            decisions: BTreeMap::new(),
            local_accs: BTreeMap::new(),
            upload_times: BTreeMap::new(),
            future: BTreeMap::new(),
            rounds_recorded: 0,
        })
    }

    // --- accessors -------------------------------------------------------

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn deadline(&self) -> f64 {
        self.deadline
    }

    pub fn waiting_time(&self) -> f64 {
        self.waiting_time
    }

    pub fn max_acc(&self) -> f64 {
        self.max_acc
    }

    pub fn global_params(&self) -> &ParameterVector {
        &self.global
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn is_round_open(&self) -> bool {
        self.phase == Phase::Open
    }

    pub fn registered_ids(&self) -> Vec<ClientId> {
        self.clients.keys().copied().collect()
    }

    // --- registration ----------------------------------------------------

    /// Handle a job download. Assigns the requested id when it is free and
    /// nonzero, otherwise the smallest free id. Returns the assigned id so
    /// the transport can bind the connection to it.
    pub fn handle_download(
        &mut self,
        requested_id: ClientId,
        dataset_size: u64,
        _now: f64,
    ) -> Result<(ClientId, Vec<ServerEffect>)> {
        if self.phase == Phase::Done {
            return Err(Error::protocol("job is complete; no further registrations"));
        }
        if dataset_size == 0 {
            return Err(Error::validation("client dataset size must be at least 1"));
        }
        let id = if requested_id != 0 && !self.clients.contains_key(&requested_id) {
            requested_id
        } else {
            (1..).find(|i| !self.clients.contains_key(i)).expect("free client id")
        };
        self.clients.insert(id, Registered { dataset_size });
        let effects = vec![ServerEffect::Send {
            to: id,
            message: Message::JobPayload {
                client_id: id,
                job: self.job.clone(),
                policy: self.policy,
            },
        }];
        Ok((id, effects))
    }

    // --- round lifecycle ---------------------------------------------------

    /// Open the next round (round 1 from the idle state). The driver calls
    /// this at job start and again after each round's dispatch completes.
    pub fn open_next_round(&mut self, now: f64) -> Result<Vec<ServerEffect>> {
        match self.phase {
            Phase::Idle | Phase::Closed => {}
            Phase::Open => return Err(Error::protocol("cannot open a round while one is open")),
            Phase::Done => return Err(Error::protocol("job is complete; no further rounds")),
        }
        self.round += 1;
        self.phase = Phase::Open;
        self.opened_at = now;
        self.deadline = now + self.waiting_time;
        self.round_reports.clear();
        self.received.clear();
        self.decisions.clear();
        self.local_accs.clear();
        self.upload_times.clear();
        let mut effects =
            vec![ServerEffect::SetDeadline { round: self.round, at: self.deadline }];
        // Replay messages that ran ahead of this round, in arrival order.
        if let Some(buffered) = self.future.remove(&self.round) {
            for b in buffered {
                let mut more = self.dispatch_message(b.from, b.message, now, b.transfer_time)?;
                effects.append(&mut more);
                if self.phase != Phase::Open {
                    // A replayed decision completed the round already.
                    break;
                }
            }
        }
        Ok(effects)
    }

    /// Close the currently open round. Precondition: `now` has reached the
    /// deadline. (Early closes — every expected client answered — happen
    /// internally and are exempt.)
    pub fn close_round(&mut self, now: f64) -> Result<Vec<ServerEffect>> {
        if self.phase != Phase::Open {
            return Err(Error::protocol("no round is open"));
        }
        if now < self.deadline {
            return Err(Error::protocol(format!(
                "round {} deadline is {}; cannot close at {}",
                self.round, self.deadline, now
            )));
        }
        self.do_close(now)
    }

    /// Driver-facing deadline callback: closes the round it was armed for,
    /// or does nothing if that round already closed early.
    pub fn deadline_expired(&mut self, round: u32, now: f64) -> Result<Vec<ServerEffect>> {
        if self.phase != Phase::Open || round != self.round {
            return Ok(Vec::new());
        }
        self.close_round(now)
    }

    /// A client's connection dropped: treat it as late for the open round
    /// and for every remaining one.
    pub fn client_disconnected(&mut self, id: ClientId, now: f64) -> Result<Vec<ServerEffect>> {
        if !self.clients.contains_key(&id) {
            return Err(Error::UnknownClient(id));
        }
        log::warn!("client {id} disconnected; treating it as late from here on");
        self.disconnected.insert(id);
        if self.phase == Phase::Open {
            return self.maybe_early_close(now);
        }
        Ok(Vec::new())
    }

    // --- message handling --------------------------------------------------

    /// Handle a message from a registered client. `transfer_time` is the
    /// seconds the message spent in transit (recorded for uploads).
    pub fn handle_message(
        &mut self,
        from: ClientId,
        message: Message,
        now: f64,
        transfer_time: f64,
    ) -> Result<Vec<ServerEffect>> {
        if !self.clients.contains_key(&from) {
            return Err(Error::UnknownClient(from));
        }
        if self.phase == Phase::Done {
            log::warn!("discarding {} from client {from}: job is complete", message.kind());
            return Ok(Vec::new());
        }
        self.dispatch_message(from, message, now, transfer_time)
    }

    fn dispatch_message(
        &mut self,
        from: ClientId,
        message: Message,
        now: f64,
        transfer_time: f64,
    ) -> Result<Vec<ServerEffect>> {
        match message {
            Message::ReportTrainingTime { round, seconds, .. } => {
                self.handle_report(from, round, seconds, message, transfer_time)
            }
            Message::RequestMaxAcc { round, .. } => Ok(vec![ServerEffect::Send {
                to: from,
                message: Message::MaxAccReply { client_id: from, round, max_acc: self.max_acc },
            }]),
            Message::UploadModel { round, .. } | Message::SkipNotice { round, .. } => {
                match self.route_round(round) {
                    RoundRouting::Current => self.handle_decision(from, message, now, transfer_time),
                    RoundRouting::Stale => {
                        log::warn!(
                            "discarding {} from client {from} for closed round {round} (current {})",
                            message.kind(),
                            self.round
                        );
                        Ok(Vec::new())
                    }
                    RoundRouting::Future => {
                        self.buffer_future(round, from, message, transfer_time);
                        Ok(Vec::new())
                    }
                }
            }
            Message::DownloadJob { .. } => Err(Error::protocol(
                "job downloads must go through handle_download so the transport learns the id",
            )),
            other => Err(Error::protocol(format!(
                "server received a server-to-client message kind {} from client {from}",
                other.kind()
            ))),
        }
    }

    fn handle_report(
        &mut self,
        from: ClientId,
        round: u32,
        seconds: f64,
        message: Message,
        transfer_time: f64,
    ) -> Result<Vec<ServerEffect>> {
        if !seconds.is_finite() || seconds <= 0.0 {
            log::warn!("discarding training-time report {seconds} from client {from}");
            return Ok(Vec::new());
        }
        // Telemetry is exempt from closed-round discarding: the carry-forward
        // table always keeps the latest known time per client.
        self.times_table.insert(from, seconds);
        match self.route_round(round) {
            RoundRouting::Current => {
                self.round_reports.insert(from, seconds);
            }
            RoundRouting::Future => {
                // Re-handled when the round opens so its record shows the time.
                self.buffer_future(round, from, message, transfer_time);
            }
            RoundRouting::Stale => {}
        }
        Ok(Vec::new())
    }

    fn handle_decision(
        &mut self,
        from: ClientId,
        message: Message,
        now: f64,
        transfer_time: f64,
    ) -> Result<Vec<ServerEffect>> {
        if let Some(existing) = self.decisions.get(&from) {
            log::warn!(
                "discarding {} from client {from} in round {}: already {}",
                message.kind(),
                self.round,
                existing.as_str()
            );
            return Ok(Vec::new());
        }
        match message {
            Message::UploadModel { params, local_acc, n_samples, .. } => {
                if let Err(e) = params.validate() {
                    log::warn!("discarding invalid upload from client {from}: {e}");
                    return Ok(Vec::new());
                }
                if params.shapes != self.job.initial_params.shapes {
                    log::warn!("discarding shape-mismatched upload from client {from}");
                    return Ok(Vec::new());
                }
                // The size declared at registration is the contract; a
                // drifting upload does not get to change its own weight.
                let registered = self.clients.get(&from).map_or(n_samples, |c| c.dataset_size);
                if n_samples != registered {
                    log::warn!(
                        "client {from} uploaded weight {n_samples} but registered {registered}; \
                         using the registered size"
                    );
                }
                let weight = match self.job.aggregation_weighting {
                    Weighting::DatasetSize => registered as f64,
                    Weighting::Uniform => 1.0,
                };
                self.received.insert(from, (params, weight));
                self.decisions.insert(from, Decision::Uploaded);
                self.local_accs.insert(from, local_acc);
                self.upload_times.insert(from, transfer_time);
            }
            Message::SkipNotice { local_acc, .. } => {
                self.decisions.insert(from, Decision::Skipped);
                self.local_accs.insert(from, local_acc);
            }
            _ => unreachable!("handle_decision only receives uploads and skip notices"),
        }
        self.maybe_early_close(now)
    }

    fn buffer_future(&mut self, round: u32, from: ClientId, message: Message, transfer_time: f64) {
        log::debug!(
            "buffering {} from client {from} for round {round} (current {})",
            message.kind(),
            self.round
        );
        self.future
            .entry(round)
            .or_default()
            .push(Buffered { from, message, transfer_time });
    }

    fn route_round(&self, round: u32) -> RoundRouting {
        if round == self.round && self.phase == Phase::Open {
            RoundRouting::Current
        } else if round > self.round {
            RoundRouting::Future
        } else {
            // Also covers round == self.round while Closed: the round is over.
            RoundRouting::Stale
        }
    }

    /// Close early iff every expected client has either answered this round
    /// or is known to be gone.
    fn maybe_early_close(&mut self, now: f64) -> Result<Vec<ServerEffect>> {
        if self.phase != Phase::Open || self.clients.len() != self.expected_clients {
            return Ok(Vec::new());
        }
        let all_answered = self
            .clients
            .keys()
            .all(|id| self.decisions.contains_key(id) || self.disconnected.contains(id));
        if all_answered {
            self.do_close(now)
        } else {
            Ok(Vec::new())
        }
    }

    fn do_close(&mut self, now: f64) -> Result<Vec<ServerEffect>> {
        debug_assert_eq!(self.phase, Phase::Open);
        let round = self.round;

        // Aggregate in client-id order; an upload-free round carries the
        // global model over unchanged (no re-evaluation either).
        if !self.received.is_empty() {
            let updates: Vec<(ParameterVector, f64)> =
                self.received.values().cloned().collect();
            self.global = aggregate(&updates)?;
            self.max_acc = self.evaluator.evaluate(&self.global)?;
        } else {
            log::warn!("round {round}: no uploads arrived; carrying the global model over");
        }

        // Build the record before the waiting time rolls forward.
        let per_client: Vec<ClientRoundRecord> = self
            .clients
            .keys()
            .map(|&id| ClientRoundRecord {
                client_id: id,
                decision: self.decisions.get(&id).copied().unwrap_or(Decision::Late),
                training_time: self.round_reports.get(&id).copied().unwrap_or(0.0),
                local_acc: self.local_accs.get(&id).copied(),
                upload_transfer_time: self.upload_times.get(&id).copied().unwrap_or(0.0),
            })
            .collect();
        let record = RoundRecord {
            round_index: round,
            waiting_time_used: self.waiting_time,
            opened_at: self.opened_at,
            closed_at: now,
            dispatch_time: now, // driver overwrites once dispatch completes
            global_acc_after: self.max_acc,
            participant_count: self.received.len(),
            per_client,
        };
        record.validate()?;

        // Adaptive schedule: next waiting time is the mean of each client's
        // most recent reported training time; with no reports yet, the
        // current waiting time stays in force.
        let times: Vec<f64> = self.times_table.values().copied().collect();
        self.waiting_time = update_waiting_time(&times, self.waiting_time)?;

        // Dispatch: participants (or everyone, by scope) get the global
        // model; the rest learn the round closed.
        let participants: BTreeSet<ClientId> = self.received.keys().copied().collect();
        let mut effects = Vec::new();
        for &id in self.clients.keys() {
            if self.disconnected.contains(&id) {
                continue;
            }
            let gets_model = match self.job.dispatch {
                DispatchScope::ParticipantsOnly => participants.contains(&id),
                DispatchScope::AllClients => true,
            };
            let message = if gets_model {
                Message::GlobalModel { client_id: id, round, params: self.global.clone() }
            } else {
                Message::RoundClosed { client_id: id, round }
            };
            effects.push(ServerEffect::Send { to: id, message });
        }
        effects.push(ServerEffect::Record(record));

        self.rounds_recorded += 1;
        if self.rounds_recorded == self.job.fusion_times {
            self.phase = Phase::Done;
            for &id in self.clients.keys() {
                if !self.disconnected.contains(&id) {
                    effects.push(ServerEffect::Send {
                        to: id,
                        message: Message::Shutdown { client_id: id },
                    });
                }
            }
            effects.push(ServerEffect::JobComplete);
        } else {
            self.phase = Phase::Closed;
        }
        Ok(effects)
    }
}

enum RoundRouting {
    Current,
    Stale,
    Future,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerShape, ModelKind, TrainerSpec};
    use crate::protocol::policy::PolicyKind;

    fn params(values: Vec<f64>) -> ParameterVector {
        // One logistic layer of 2 classes x 1 feature: 2 weights + 2 biases.
        assert_eq!(values.len(), 4);
        ParameterVector::new(values, vec![LayerShape { rows: 2, cols: 1 }], 1_000).unwrap()
    }

    fn job(fusion_times: u32, waiting: f64) -> Job {
        Job {
            fusion_times,
            initial_params: params(vec![0.0, 0.0, 0.0, 0.0]),
            trainer: TrainerSpec {
                model_kind: ModelKind::Logistic,
                learning_rate: 0.1,
                batch_size: 8,
                epochs: 1,
            },
            initial_waiting_time: waiting,
            aggregation_weighting: Weighting::DatasetSize,
            dispatch: DispatchScope::ParticipantsOnly,
        }
    }

    fn policy() -> ParticipationPolicy {
        ParticipationPolicy { kind: PolicyKind::GlobalMax, first_round_uploads: true }
    }

    fn server(fusion_times: u32, waiting: f64, expected: usize, accs: Vec<f64>) -> ServerProtocol {
        ServerProtocol::new(
            job(fusion_times, waiting),
            policy(),
            expected,
            Box::new(ScriptedEvaluator::new(accs)),
        )
        .unwrap()
    }

    fn upload(id: ClientId, round: u32, values: Vec<f64>, n: u64) -> Message {
        Message::UploadModel {
            client_id: id,
            round,
            params: params(values),
            local_acc: 0.9,
            n_samples: n,
        }
    }

    fn register(s: &mut ServerProtocol, id: ClientId, n: u64) {
        let (got, _) = s.handle_download(id, n, 0.0).unwrap();
        assert_eq!(got, id);
    }

    #[test]
    fn upload_weight_comes_from_registration() {
        // Client 2 registered 300 samples but claims 999 in its upload; the
        // registered size wins: mean = (100*1 + 300*5)/400 = 4, not
        // (100*1 + 999*5)/1099.
        let mut s = server(1, 30.0, 2, vec![0.5, 0.7]);
        register(&mut s, 1, 100);
        register(&mut s, 2, 300);
        s.open_next_round(0.0).unwrap();
        s.handle_message(1, upload(1, 1, vec![1.0; 4], 100), 5.0, 1.0).unwrap();
        s.handle_message(2, upload(2, 1, vec![5.0; 4], 999), 8.0, 2.0).unwrap();
        for v in &s.global_params().values {
            assert!((v - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn waiting_time_mean_and_fallback() {
        // Mean of 10 and 20 is 15; empty input keeps the fallback.
        assert_eq!(update_waiting_time(&[10.0, 20.0], 5.0).unwrap(), 15.0);
        assert_eq!(update_waiting_time(&[], 7.5).unwrap(), 7.5);
        assert!(update_waiting_time(&[10.0, 0.0], 5.0).is_err());
        assert!(update_waiting_time(&[10.0], 0.0).is_err());
        assert!(update_waiting_time(&[f64::NAN], 5.0).is_err());
    }

    #[test]
    fn full_round_with_early_close() {
        // Initial acc 0.5; after round 1 aggregation the script says 0.7.
        let mut s = server(2, 30.0, 2, vec![0.5, 0.7, 0.8]);
        register(&mut s, 1, 100);
        register(&mut s, 2, 300);
        let fx = s.open_next_round(0.0).unwrap();
        assert_eq!(fx, vec![ServerEffect::SetDeadline { round: 1, at: 30.0 }]);
        assert!((s.max_acc() - 0.5).abs() < 1e-15);

        // Client 1 uploads [1,1,1,1] (weight 100), client 2 uploads
        // [5,5,5,5] (weight 300): mean = (100*1 + 300*5)/400 = 4.
        let fx = s
            .handle_message(1, upload(1, 1, vec![1.0; 4], 100), 5.0, 1.0)
            .unwrap();
        assert!(fx.is_empty(), "round must stay open until everyone answers");
        let fx = s
            .handle_message(2, upload(2, 1, vec![5.0; 4], 300), 8.0, 2.0)
            .unwrap();
        // Early close: both expected clients answered at t=8 < deadline 30.
        let record = fx
            .iter()
            .find_map(|e| match e {
                ServerEffect::Record(r) => Some(r.clone()),
                _ => None,
            })
            .expect("close emits a record");
        assert_eq!(record.round_index, 1);
        assert_eq!(record.participant_count, 2);
        assert_eq!(record.closed_at, 8.0);
        assert_eq!(record.waiting_time_used, 30.0);
        assert!((record.global_acc_after - 0.7).abs() < 1e-15);
        for v in &s.global_params().values {
            assert!((v - 4.0).abs() < 1e-12);
        }
        // Both participated, so both get the global model and no one gets
        // a round-closed notice.
        let sends: Vec<_> = fx
            .iter()
            .filter_map(|e| match e {
                ServerEffect::Send { to, message } => Some((*to, message.kind())),
                _ => None,
            })
            .collect();
        assert_eq!(sends, vec![(1, "global_model"), (2, "global_model")]);
        assert!((s.max_acc() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn deadline_close_marks_late_and_skips_get_notice() {
        let mut s = server(2, 30.0, 3, vec![0.5, 0.7]);
        register(&mut s, 1, 100);
        register(&mut s, 2, 100);
        register(&mut s, 3, 100);
        s.open_next_round(0.0).unwrap();
        s.handle_message(1, upload(1, 1, vec![1.0; 4], 100), 5.0, 1.0).unwrap();
        s.handle_message(
            2,
            Message::SkipNotice { client_id: 2, round: 1, local_acc: 0.3 },
            6.0,
            0.0,
        )
        .unwrap();
        // Client 3 never answers; the deadline closes the round.
        let fx = s.deadline_expired(1, 30.0).unwrap();
        let record = fx
            .iter()
            .find_map(|e| match e {
                ServerEffect::Record(r) => Some(r.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(record.participant_count, 1);
        assert_eq!(record.client(1).unwrap().decision, Decision::Uploaded);
        assert_eq!(record.client(2).unwrap().decision, Decision::Skipped);
        assert_eq!(record.client(3).unwrap().decision, Decision::Late);
        assert_eq!(record.client(2).unwrap().local_acc, Some(0.3));
        assert_eq!(record.client(3).unwrap().local_acc, None);
        let sends: Vec<_> = fx
            .iter()
            .filter_map(|e| match e {
                ServerEffect::Send { to, message } => Some((*to, message.kind())),
                _ => None,
            })
            .collect();
        assert_eq!(
            sends,
            vec![(1, "global_model"), (2, "round_closed"), (3, "round_closed")]
        );
    }

    #[test]
    fn upload_free_round_carries_global_over() {
        let mut s = server(2, 10.0, 1, vec![0.5, 0.9]);
        register(&mut s, 1, 100);
        s.open_next_round(0.0).unwrap();
        let before = s.global_params().clone();
        let fx = s.deadline_expired(1, 10.0).unwrap();
        let record = fx
            .iter()
            .find_map(|e| match e {
                ServerEffect::Record(r) => Some(r.clone()),
                _ => None,
            })
            .unwrap();
        // No uploads: identical parameters, unchanged accuracy, and the
        // scripted evaluator's next entry is NOT consumed.
        assert_eq!(s.global_params(), &before);
        assert_eq!(record.participant_count, 0);
        assert!((record.global_acc_after - 0.5).abs() < 1e-15);
        // The next aggregation consumes 0.9, proving carry-over ate nothing.
        s.open_next_round(11.0).unwrap();
        let fx = s.handle_message(1, upload(1, 2, vec![1.0; 4], 100), 12.0, 1.0).unwrap();
        let record = fx
            .iter()
            .find_map(|e| match e {
                ServerEffect::Record(r) => Some(r.clone()),
                _ => None,
            })
            .unwrap();
        assert!((record.global_acc_after - 0.9).abs() < 1e-15);
    }

    #[test]
    fn duplicate_and_closed_round_uploads_are_discarded() {
        let mut s = server(2, 30.0, 2, vec![0.5, 0.7]);
        register(&mut s, 1, 100);
        register(&mut s, 2, 100);
        s.open_next_round(0.0).unwrap();
        s.handle_message(1, upload(1, 1, vec![1.0; 4], 100), 5.0, 1.0).unwrap();
        // Second upload from client 1: first wins.
        let fx = s.handle_message(1, upload(1, 1, vec![9.0; 4], 100), 6.0, 1.0).unwrap();
        assert!(fx.is_empty());
        let fx = s.handle_message(2, upload(2, 1, vec![3.0; 4], 100), 7.0, 1.0).unwrap();
        let record = fx
            .iter()
            .find_map(|e| match e {
                ServerEffect::Record(r) => Some(r.clone()),
                _ => None,
            })
            .unwrap();
        // Equal weights, values 1 and 3: mean 2 (the 9s were discarded).
        assert_eq!(record.participant_count, 2);
        for v in &s.global_params().values {
            assert!((v - 2.0).abs() < 1e-12);
        }
        // The round closed; a late upload for it is acknowledged and dropped.
        let fx = s.handle_message(2, upload(2, 1, vec![7.0; 4], 100), 8.0, 1.0).unwrap();
        assert!(fx.is_empty());
        for v in &s.global_params().values {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn future_round_messages_wait_for_their_round() {
        let mut s = server(2, 30.0, 2, vec![0.5, 0.7, 0.9]);
        register(&mut s, 1, 100);
        register(&mut s, 2, 100);
        s.open_next_round(0.0).unwrap();
        // Client 2 runs ahead: its round-2 upload arrives while round 1 is
        // still open, and must not count for round 1.
        let fx = s.handle_message(2, upload(2, 2, vec![8.0; 4], 100), 3.0, 1.0).unwrap();
        assert!(fx.is_empty());
        s.handle_message(1, upload(1, 1, vec![2.0; 4], 100), 5.0, 1.0).unwrap();
        let fx = s.deadline_expired(1, 30.0).unwrap();
        let r1 = fx
            .iter()
            .find_map(|e| match e {
                ServerEffect::Record(r) => Some(r.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(r1.participant_count, 1);
        assert_eq!(r1.client(2).unwrap().decision, Decision::Late);

        // Opening round 2 replays the buffered upload: client 2 is a
        // participant there from the moment the round opens.
        let fx = s.open_next_round(31.0).unwrap();
        assert!(fx
            .iter()
            .any(|e| matches!(e, ServerEffect::SetDeadline { round: 2, .. })));
        s.handle_message(1, upload(1, 2, vec![4.0; 4], 100), 32.0, 1.0).unwrap();
        assert!(s.is_done() || !s.is_round_open() || s.round() == 2);
    }

    #[test]
    fn replayed_decision_can_close_the_round_at_open() {
        let mut s = server(2, 30.0, 1, vec![0.5, 0.7, 0.9]);
        register(&mut s, 1, 100);
        s.open_next_round(0.0).unwrap();
        s.handle_message(1, upload(1, 1, vec![2.0; 4], 100), 3.0, 1.0).unwrap();
        // Round 1 closed early (single expected client). Its round-2 upload
        // arrives during the dispatch gap and gets buffered.
        assert!(!s.is_round_open());
        s.handle_message(1, upload(1, 2, vec![6.0; 4], 100), 4.0, 1.0).unwrap();
        // Opening round 2 replays the buffer; the lone client has answered,
        // so the round closes at the open timestamp.
        let fx = s.open_next_round(5.0).unwrap();
        let r2 = fx
            .iter()
            .find_map(|e| match e {
                ServerEffect::Record(r) => Some(r.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(r2.round_index, 2);
        assert_eq!(r2.participant_count, 1);
        assert_eq!(r2.opened_at, 5.0);
        assert_eq!(r2.closed_at, 5.0);
        assert!(s.is_done());
    }

    #[test]
    fn waiting_time_carries_forward_last_known_times() {
        // Three clients; only clients 1 and 2 report in round 1 (10s, 20s).
        // Round 2's waiting time = mean(10, 20) = 15. Client 3's report
        // (60s) arrives during round 2; round 3's waiting time =
        // mean(10, 20, 60) = 30 even though clients 1-2 sent nothing new.
        let mut s = server(4, 30.0, 3, vec![0.5]);
        register(&mut s, 1, 100);
        register(&mut s, 2, 100);
        register(&mut s, 3, 100);
        s.open_next_round(0.0).unwrap();
        let report = |id: ClientId, round: u32, secs: f64| Message::ReportTrainingTime {
            client_id: id,
            round,
            seconds: secs,
        };
        s.handle_message(1, report(1, 1, 10.0), 10.0, 0.0).unwrap();
        s.handle_message(2, report(2, 1, 20.0), 20.0, 0.0).unwrap();
        s.deadline_expired(1, 30.0).unwrap();
        assert_eq!(s.waiting_time(), 15.0);

        s.open_next_round(30.0).unwrap();
        // The straggler's round-1 report arrives mid-round-2: telemetry is
        // exempt from closed-round discarding.
        s.handle_message(3, report(3, 1, 60.0), 35.0, 0.0).unwrap();
        s.deadline_expired(2, 45.0).unwrap();
        assert_eq!(s.waiting_time(), 30.0);

        // No new reports in round 3: the table still holds all three.
        s.open_next_round(45.0).unwrap();
        s.deadline_expired(3, 75.0).unwrap();
        assert_eq!(s.waiting_time(), 30.0);
    }

    #[test]
    fn max_acc_reply_any_time_and_close_preconditions() {
        let mut s = server(2, 30.0, 2, vec![0.5, 0.7]);
        register(&mut s, 1, 100);
        register(&mut s, 2, 100);
        s.open_next_round(0.0).unwrap();
        let fx = s
            .handle_message(
                1,
                Message::RequestMaxAcc { client_id: 1, round: 1 },
                2.0,
                0.0,
            )
            .unwrap();
        assert_eq!(
            fx,
            vec![ServerEffect::Send {
                to: 1,
                message: Message::MaxAccReply { client_id: 1, round: 1, max_acc: 0.5 },
            }]
        );
        // Closing before the deadline is a protocol-order error; the stale
        // deadline callback for an already-closed round is a no-op.
        assert!(s.close_round(10.0).is_err());
        s.handle_message(1, upload(1, 1, vec![1.0; 4], 100), 5.0, 1.0).unwrap();
        s.handle_message(2, upload(2, 1, vec![1.0; 4], 100), 6.0, 1.0).unwrap();
        let fx = s.deadline_expired(1, 30.0).unwrap();
        assert!(fx.is_empty(), "deadline for an early-closed round must do nothing");
    }

    #[test]
    fn job_completion_sends_shutdown_to_everyone() {
        let mut s = server(1, 30.0, 2, vec![0.5, 0.7]);
        register(&mut s, 1, 100);
        register(&mut s, 2, 100);
        s.open_next_round(0.0).unwrap();
        s.handle_message(1, upload(1, 1, vec![1.0; 4], 100), 5.0, 1.0).unwrap();
        let fx = s.handle_message(2, upload(2, 1, vec![1.0; 4], 100), 6.0, 1.0).unwrap();
        let kinds: Vec<_> = fx
            .iter()
            .map(|e| match e {
                ServerEffect::Send { message, .. } => message.kind().to_string(),
                ServerEffect::Record(_) => "record".into(),
                ServerEffect::JobComplete => "job_complete".into(),
                ServerEffect::SetDeadline { .. } => "set_deadline".into(),
            })
            .collect();
        assert_eq!(
            kinds,
            vec![
                "global_model",
                "global_model",
                "record",
                "shutdown",
                "shutdown",
                "job_complete"
            ]
        );
        assert!(s.is_done());
        assert!(s.open_next_round(40.0).is_err());
    }

    #[test]
    fn disconnect_counts_as_answered_for_early_close() {
        let mut s = server(2, 30.0, 2, vec![0.5, 0.7]);
        register(&mut s, 1, 100);
        register(&mut s, 2, 100);
        s.open_next_round(0.0).unwrap();
        s.handle_message(1, upload(1, 1, vec![1.0; 4], 100), 5.0, 1.0).unwrap();
        let fx = s.client_disconnected(2, 6.0).unwrap();
        let record = fx
            .iter()
            .find_map(|e| match e {
                ServerEffect::Record(r) => Some(r.clone()),
                _ => None,
            })
            .expect("disconnect completes the round");
        assert_eq!(record.client(2).unwrap().decision, Decision::Late);
        // The disconnected client receives nothing.
        assert!(fx.iter().all(|e| !matches!(
            e,
            ServerEffect::Send { to: 2, .. }
        )));
    }

    #[test]
    fn requested_id_collisions_get_next_free_id() {
        let mut s = server(1, 30.0, 3, vec![0.5]);
        let (a, _) = s.handle_download(7, 10, 0.0).unwrap();
        let (b, _) = s.handle_download(7, 10, 0.0).unwrap();
        let (c, _) = s.handle_download(0, 10, 0.0).unwrap();
        assert_eq!(a, 7);
        assert_eq!(b, 1);
        assert_eq!(c, 2);
        assert!(s.handle_download(9, 0, 0.0).is_err(), "zero-size dataset rejected");
    }

    #[test]
    fn unknown_client_is_an_error() {
        let mut s = server(1, 30.0, 1, vec![0.5]);
        register(&mut s, 1, 100);
        s.open_next_round(0.0).unwrap();
        let err = s
            .handle_message(42, Message::RequestMaxAcc { client_id: 42, round: 1 }, 1.0, 0.0)
            .unwrap_err();
        assert!(matches!(err, Error::UnknownClient(42)));
    }
}
