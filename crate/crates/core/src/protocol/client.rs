//! Client-side protocol state machine.
//!
//! Like the server, the client is transport-agnostic and engine-agnostic: a
//! driver feeds it server messages and training completions, and it returns
//! actions (messages to send, training to start). Local training itself
//! happens outside — in the simulator's compute model or in a real thread.

use crate::error::{Error, Result};
use crate::model::ParameterVector;
use crate::protocol::job::{DispatchScope, Job};
use crate::protocol::messages::{ClientId, Message};
use crate::protocol::policy::{decide_participation, Choice, ParticipationPolicy, PolicyKind};

/// Where the client is in its per-round loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientPhase {
    /// Constructed; waiting for the driver to start the first round.
    Idle,
    /// Local training in progress.
    Training,
    /// Training finished; waiting for the accuracy gate to decide.
    Deciding,
    /// Decision sent; waiting for the round outcome.
    AwaitingGlobal,
    /// All rounds done (or shut down by the server).
    Done,
}

/// Inputs the driver feeds into the machine.
#[derive(Debug, Clone)]
pub enum ClientEvent {
    /// Begin the first round.
    Start,
    /// Local training finished: the trained parameters, the local accuracy
    /// measured on the client's own data, and the wall-clock seconds spent.
    TrainingDone { params: ParameterVector, local_acc: f64, training_time: f64 },
    /// A message from the server arrived.
    Message(Message),
}

/// Outputs the driver must realize.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientAction {
    /// Run local training for `round` starting from `params`, then feed back
    /// [`ClientEvent::TrainingDone`].
    StartTraining { round: u32, params: ParameterVector },
    /// Send a message to the server.
    Send(Message),
}

/// The dynamic-fusion client: train, gate, upload-or-skip, resynchronize.
pub struct ClientMachine {
    id: ClientId,
    job: Job,
    policy: ParticipationPolicy,
    n_samples: u64,

    phase: ClientPhase,
    /// Rounds completed from this client's point of view; the round it works
    /// on is `fed_step + 1`.
    fed_step: u32,
    current_params: ParameterVector,
    /// The local accuracy measured in the previous round, once one exists.
    last_local_acc: Option<f64>,
    /// The accuracy measured this round, parked while the gate is consulted.
    pending_acc: Option<f64>,
    /// Set when the server closed round(s) up to this index while training
    /// was still running: handled at training completion.
    closed_while_training: Option<u32>,
    /// A global model that arrived while training (all-clients dispatch);
    /// adopted at training completion.
    pending_global: Option<ParameterVector>,
}

impl ClientMachine {
    pub fn new(
        id: ClientId,
        job: Job,
        policy: ParticipationPolicy,
        n_samples: u64,
    ) -> Result<Self> {
        job.validate()?;
        if n_samples == 0 {
            return Err(Error::validation("client dataset must have at least one sample"));
        }
        let current_params = job.initial_params.clone();
        Ok(ClientMachine {
            id,
            job,
            policy,
            n_samples,
            phase: ClientPhase::Idle,
            fed_step: 0,
            current_params,
            last_local_acc: None,
            pending_acc: None,
            closed_while_training: None,
            pending_global: None,
        })
    }

    pub fn id(&self) -> ClientId {
        self.id
    }

    pub fn phase(&self) -> ClientPhase {
        self.phase
    }

    /// The round this client is currently working on.
    pub fn current_round(&self) -> u32 {
        self.fed_step + 1
    }

    pub fn completed_rounds(&self) -> u32 {
        self.fed_step
    }

    pub fn params(&self) -> &ParameterVector {
        &self.current_params
    }

    pub fn is_done(&self) -> bool {
        self.phase == ClientPhase::Done
    }

    /// Advance the machine with one event, returning the actions to realize.
    pub fn step(&mut self, event: ClientEvent) -> Result<Vec<ClientAction>> {
        match event {
            ClientEvent::Start => self.on_start(),
            ClientEvent::TrainingDone { params, local_acc, training_time } => {
                self.on_training_done(params, local_acc, training_time)
            }
            ClientEvent::Message(m) => self.on_message(m),
        }
    }

    fn on_start(&mut self) -> Result<Vec<ClientAction>> {
        if self.phase != ClientPhase::Idle {
            return Err(Error::protocol("client already started"));
        }
        self.phase = ClientPhase::Training;
        Ok(vec![ClientAction::StartTraining {
            round: self.current_round(),
            params: self.current_params.clone(),
        }])
    }

    fn on_training_done(
        &mut self,
        params: ParameterVector,
        local_acc: f64,
        training_time: f64,
    ) -> Result<Vec<ClientAction>> {
        match self.phase {
            ClientPhase::Training => {}
            // A shutdown can overtake an in-flight training run; drop the result.
            ClientPhase::Done => return Ok(Vec::new()),
            _ => return Err(Error::protocol("training completion outside the training phase")),
        }
        let round = self.current_round();
        self.current_params = params;
        let mut actions = vec![ClientAction::Send(Message::ReportTrainingTime {
            client_id: self.id,
            round,
            seconds: training_time,
        })];
        if let Some(closed_up_to) = self.closed_while_training.take() {
            // The round closed mid-training: this client is late. Its local
            // accuracy still becomes the next improvement reference.
            self.last_local_acc = Some(local_acc);
            if let Some(global) = self.pending_global.take() {
                self.current_params = global;
            }
            self.advance_to(closed_up_to, &mut actions);
        } else {
            self.phase = ClientPhase::Deciding;
            self.pending_acc = Some(local_acc);
            actions.push(ClientAction::Send(Message::RequestMaxAcc {
                client_id: self.id,
                round,
            }));
        }
        Ok(actions)
    }

    fn on_message(&mut self, message: Message) -> Result<Vec<ClientAction>> {
        if self.phase == ClientPhase::Done {
            return Ok(Vec::new());
        }
        if let Message::Shutdown { .. } = message {
            self.phase = ClientPhase::Done;
            return Ok(Vec::new());
        }
        let cur = self.current_round();
        // Everything below is round-scoped; drop leftovers from rounds this
        // client has already moved past.
        if let Some(r) = message.round() {
            if r < cur {
                log::debug!(
                    "client {}: ignoring stale {} for round {r} (now at {cur})",
                    self.id,
                    message.kind()
                );
                return Ok(Vec::new());
            }
        }
        match (self.phase, message) {
            (ClientPhase::Deciding, Message::MaxAccReply { round, max_acc, .. }) => {
                if round > cur {
                    return Err(Error::protocol(format!(
                        "client {}: gate reply for round {round} while deciding round {cur}",
                        self.id
                    )));
                }
                self.decide(max_acc)
            }
            (_, Message::MaxAccReply { round, .. }) => Err(Error::protocol(format!(
                "client {}: unsolicited gate reply for round {round}",
                self.id
            ))),

            (ClientPhase::Training, Message::RoundClosed { round, .. }) => {
                self.note_closed(round);
                Ok(Vec::new())
            }
            (ClientPhase::Training, Message::GlobalModel { round, params, .. }) => {
                self.note_closed(round);
                self.pending_global = Some(params);
                Ok(Vec::new())
            }

            (ClientPhase::Deciding, Message::RoundClosed { round, .. }) => {
                // Closed before the gate answered: late, keep local params.
                self.last_local_acc = self.pending_acc.take();
                let mut actions = Vec::new();
                self.advance_to(round, &mut actions);
                Ok(actions)
            }
            (ClientPhase::Deciding, Message::GlobalModel { round, params, .. }) => {
                self.last_local_acc = self.pending_acc.take();
                self.current_params = params;
                let mut actions = Vec::new();
                self.advance_to(round, &mut actions);
                Ok(actions)
            }

            (ClientPhase::AwaitingGlobal, Message::GlobalModel { round, params, .. }) => {
                self.current_params = params;
                let mut actions = Vec::new();
                self.advance_to(round, &mut actions);
                Ok(actions)
            }
            (ClientPhase::AwaitingGlobal, Message::RoundClosed { round, .. }) => {
                // The upload missed the deadline; continue from local params.
                let mut actions = Vec::new();
                self.advance_to(round, &mut actions);
                Ok(actions)
            }

            (phase, other) => Err(Error::protocol(format!(
                "client {}: unexpected {} in phase {phase:?}",
                self.id,
                other.kind()
            ))),
        }
    }

    /// Apply the gate once the reference accuracy is known.
    fn decide(&mut self, max_acc: f64) -> Result<Vec<ClientAction>> {
        let round = self.current_round();
        let local_acc = self
            .pending_acc
            .take()
            .ok_or_else(|| Error::protocol("deciding with no measured accuracy"))?;
        let reference = match self.policy.kind {
            PolicyKind::GlobalMax => Some(max_acc),
            PolicyKind::LocalImprovement => self.last_local_acc,
        };
        let choice = decide_participation(self.policy, local_acc, reference)?;
        self.last_local_acc = Some(local_acc);
        match choice {
            Choice::Upload => {
                self.phase = ClientPhase::AwaitingGlobal;
                Ok(vec![ClientAction::Send(Message::UploadModel {
                    client_id: self.id,
                    round,
                    params: self.current_params.clone(),
                    local_acc,
                    n_samples: self.n_samples,
                })])
            }
            Choice::Skip => {
                let mut actions = vec![ClientAction::Send(Message::SkipNotice {
                    client_id: self.id,
                    round,
                    local_acc,
                })];
                match self.job.dispatch {
                    // Run ahead: skippers keep training from their own model
                    // without waiting for the round to close.
                    DispatchScope::ParticipantsOnly => self.advance_to(round, &mut actions),
                    // Everyone resynchronizes from the dispatched global.
                    DispatchScope::AllClients => self.phase = ClientPhase::AwaitingGlobal,
                }
                Ok(actions)
            }
        }
    }

    fn note_closed(&mut self, round: u32) {
        let r = self.closed_while_training.map_or(round, |prev| prev.max(round));
        self.closed_while_training = Some(r);
    }

    /// Mark rounds up to `round` complete and either start the next one or
    /// finish the job.
    fn advance_to(&mut self, round: u32, actions: &mut Vec<ClientAction>) {
        debug_assert!(round >= self.current_round());
        self.fed_step = round;
        self.pending_acc = None;
        self.pending_global = None;
        if self.fed_step >= self.job.fusion_times {
            self.phase = ClientPhase::Done;
        } else {
            self.phase = ClientPhase::Training;
            actions.push(ClientAction::StartTraining {
                round: self.current_round(),
                params: self.current_params.clone(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerShape, ModelKind, TrainerSpec};

    fn params(fill: f64) -> ParameterVector {
        ParameterVector::new(vec![fill; 4], vec![LayerShape { rows: 2, cols: 1 }], 1_000).unwrap()
    }

    fn job(dispatch: DispatchScope, fusion_times: u32) -> Job {
        Job {
            fusion_times,
            initial_params: params(0.0),
            trainer: TrainerSpec {
                model_kind: ModelKind::Logistic,
                learning_rate: 0.1,
                batch_size: 8,
                epochs: 1,
            },
            initial_waiting_time: 30.0,
            aggregation_weighting: Default::default(),
            dispatch,
        }
    }

    fn machine(dispatch: DispatchScope, kind: PolicyKind, fusion_times: u32) -> ClientMachine {
        ClientMachine::new(
            1,
            job(dispatch, fusion_times),
            ParticipationPolicy { kind, first_round_uploads: true },
            250,
        )
        .unwrap()
    }

    fn trained(fill: f64, acc: f64) -> ClientEvent {
        ClientEvent::TrainingDone { params: params(fill), local_acc: acc, training_time: 12.0 }
    }

    fn msg(m: Message) -> ClientEvent {
        ClientEvent::Message(m)
    }

    fn reply(round: u32, max_acc: f64) -> ClientEvent {
        msg(Message::MaxAccReply { client_id: 1, round, max_acc })
    }

    fn global(round: u32, fill: f64) -> ClientEvent {
        msg(Message::GlobalModel { client_id: 1, round, params: params(fill) })
    }

    fn closed(round: u32) -> ClientEvent {
        msg(Message::RoundClosed { client_id: 1, round })
    }

    #[test]
    fn upload_path_round_trip() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::GlobalMax, 3);
        let a = c.step(ClientEvent::Start).unwrap();
        assert_eq!(a, vec![ClientAction::StartTraining { round: 1, params: params(0.0) }]);

        let a = c.step(trained(1.5, 0.8)).unwrap();
        // Telemetry first, then the gate request.
        assert_eq!(a.len(), 2);
        assert!(matches!(
            &a[0],
            ClientAction::Send(Message::ReportTrainingTime { round: 1, seconds, .. })
                if *seconds == 12.0
        ));
        assert!(matches!(&a[1], ClientAction::Send(Message::RequestMaxAcc { round: 1, .. })));

        // Gate 0.8 vs local 0.8: inclusive, so upload.
        let a = c.step(reply(1, 0.8)).unwrap();
        match &a[..] {
            [ClientAction::Send(Message::UploadModel { round, params: p, local_acc, n_samples, .. })] => {
                assert_eq!(*round, 1);
                assert_eq!(p, &params(1.5));
                assert_eq!(*local_acc, 0.8);
                assert_eq!(*n_samples, 250);
            }
            other => panic!("expected upload, got {other:?}"),
        }
        assert_eq!(c.phase(), ClientPhase::AwaitingGlobal);

        // The aggregated model comes back and round 2 starts from it.
        let a = c.step(global(1, 9.0)).unwrap();
        assert_eq!(a, vec![ClientAction::StartTraining { round: 2, params: params(9.0) }]);
        assert_eq!(c.completed_rounds(), 1);
    }

    #[test]
    fn skip_runs_ahead_under_participants_only() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::GlobalMax, 3);
        c.step(ClientEvent::Start).unwrap();
        c.step(trained(2.0, 0.4)).unwrap();
        // Gate 0.9 beats local 0.4: skip, and keep going from local params
        // without waiting for the round to close.
        let a = c.step(reply(1, 0.9)).unwrap();
        assert_eq!(a.len(), 2);
        assert!(matches!(
            &a[0],
            ClientAction::Send(Message::SkipNotice { round: 1, local_acc, .. }) if *local_acc == 0.4
        ));
        assert_eq!(a[1], ClientAction::StartTraining { round: 2, params: params(2.0) });
        // The eventual round-1 close notice is stale by then.
        let a = c.step(closed(1)).unwrap();
        assert!(a.is_empty());
    }

    #[test]
    fn skip_waits_and_resyncs_under_all_clients() {
        let mut c = machine(DispatchScope::AllClients, PolicyKind::GlobalMax, 3);
        c.step(ClientEvent::Start).unwrap();
        c.step(trained(2.0, 0.4)).unwrap();
        let a = c.step(reply(1, 0.9)).unwrap();
        assert_eq!(a.len(), 1, "skip under all-clients dispatch must wait");
        assert_eq!(c.phase(), ClientPhase::AwaitingGlobal);
        let a = c.step(global(1, 7.0)).unwrap();
        // Round 2 starts from the dispatched global, not the local 2.0s.
        assert_eq!(a, vec![ClientAction::StartTraining { round: 2, params: params(7.0) }]);
    }

    #[test]
    fn late_while_training_keeps_local_params_under_participants_only() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::GlobalMax, 3);
        c.step(ClientEvent::Start).unwrap();
        // Round 1 closes while this straggler is still training.
        assert!(c.step(closed(1)).unwrap().is_empty());
        let a = c.step(trained(3.0, 0.6)).unwrap();
        // Telemetry still goes out (the table keeps the latest time), then
        // round 2 starts immediately from the locally trained parameters.
        assert_eq!(a.len(), 2);
        assert!(matches!(
            &a[0],
            ClientAction::Send(Message::ReportTrainingTime { round: 1, .. })
        ));
        assert_eq!(a[1], ClientAction::StartTraining { round: 2, params: params(3.0) });
        assert_eq!(c.completed_rounds(), 1);
    }

    #[test]
    fn late_while_training_resyncs_under_all_clients() {
        let mut c = machine(DispatchScope::AllClients, PolicyKind::GlobalMax, 3);
        c.step(ClientEvent::Start).unwrap();
        // Under all-clients dispatch a late client receives the global model
        // instead of a bare close notice.
        assert!(c.step(global(1, 5.0)).unwrap().is_empty());
        let a = c.step(trained(3.0, 0.6)).unwrap();
        assert_eq!(a[1], ClientAction::StartTraining { round: 2, params: params(5.0) });
    }

    #[test]
    fn late_upload_discarded_continues_from_local() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::GlobalMax, 3);
        c.step(ClientEvent::Start).unwrap();
        c.step(trained(4.0, 0.9)).unwrap();
        c.step(reply(1, 0.5)).unwrap(); // uploads
        // The upload was too late; the server closed without it.
        let a = c.step(closed(1)).unwrap();
        assert_eq!(a, vec![ClientAction::StartTraining { round: 2, params: params(4.0) }]);
    }

    #[test]
    fn closed_while_deciding_counts_accuracy_as_reference() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::LocalImprovement, 3);
        c.step(ClientEvent::Start).unwrap();
        c.step(trained(1.0, 0.6)).unwrap();
        // Round closes before the gate reply arrives.
        let a = c.step(closed(1)).unwrap();
        assert_eq!(a, vec![ClientAction::StartTraining { round: 2, params: params(1.0) }]);
        c.step(trained(1.1, 0.5)).unwrap();
        // Local-improvement gate: 0.5 < previous 0.6 from the cut-short
        // round, so this skips.
        let a = c.step(reply(2, 0.0)).unwrap();
        assert!(matches!(
            &a[0],
            ClientAction::Send(Message::SkipNotice { round: 2, .. })
        ));
    }

    #[test]
    fn local_improvement_first_round_uses_flag() {
        let mut c = ClientMachine::new(
            1,
            job(DispatchScope::ParticipantsOnly, 3),
            ParticipationPolicy { kind: PolicyKind::LocalImprovement, first_round_uploads: false },
            250,
        )
        .unwrap();
        c.step(ClientEvent::Start).unwrap();
        c.step(trained(1.0, 0.99)).unwrap();
        // No previous local accuracy and first_round_uploads=false: skip
        // regardless of the measured 0.99.
        let a = c.step(reply(1, 0.0)).unwrap();
        assert!(matches!(&a[0], ClientAction::Send(Message::SkipNotice { .. })));
        c.step(trained(1.2, 0.99)).unwrap();
        // Second round: 0.99 >= previous 0.99, inclusive gate uploads.
        let a = c.step(reply(2, 0.0)).unwrap();
        assert!(matches!(&a[0], ClientAction::Send(Message::UploadModel { .. })));
    }

    #[test]
    fn shutdown_stops_everything() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::GlobalMax, 5);
        c.step(ClientEvent::Start).unwrap();
        assert!(c.step(msg(Message::Shutdown { client_id: 1 })).unwrap().is_empty());
        assert!(c.is_done());
        // An in-flight training completion after shutdown is dropped.
        assert!(c.step(trained(1.0, 0.5)).unwrap().is_empty());
        assert!(c.step(global(1, 2.0)).unwrap().is_empty());
    }

    #[test]
    fn finishes_after_fusion_times_rounds() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::GlobalMax, 2);
        c.step(ClientEvent::Start).unwrap();
        c.step(trained(1.0, 0.9)).unwrap();
        c.step(reply(1, 0.1)).unwrap();
        c.step(global(1, 1.5)).unwrap();
        c.step(trained(2.0, 0.95)).unwrap();
        c.step(reply(2, 0.1)).unwrap();
        let a = c.step(global(2, 2.5)).unwrap();
        assert!(a.is_empty(), "no third round after fusion_times=2");
        assert!(c.is_done());
    }

    #[test]
    fn skipping_the_final_round_finishes_locally() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::GlobalMax, 1);
        c.step(ClientEvent::Start).unwrap();
        c.step(trained(1.0, 0.2)).unwrap();
        let a = c.step(reply(1, 0.9)).unwrap();
        assert_eq!(a.len(), 1, "skip notice only; the job is over locally");
        assert!(c.is_done());
    }

    #[test]
    fn catch_up_across_multiple_closed_rounds() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::GlobalMax, 5);
        c.step(ClientEvent::Start).unwrap();
        c.step(trained(1.0, 0.9)).unwrap();
        c.step(reply(1, 0.1)).unwrap();
        // The server moved on; a round-3 close notice fast-forwards this
        // client past rounds 1-3.
        let a = c.step(closed(3)).unwrap();
        assert_eq!(a, vec![ClientAction::StartTraining { round: 4, params: params(1.0) }]);
        assert_eq!(c.completed_rounds(), 3);
    }

    #[test]
    fn out_of_phase_inputs_error() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::GlobalMax, 3);
        c.step(ClientEvent::Start).unwrap();
        // A gate reply while still training was never requested.
        assert!(c.step(reply(1, 0.5)).is_err());
        // Double start.
        assert!(c.step(ClientEvent::Start).is_err());
        // Training completion while deciding.
        c.step(trained(1.0, 0.5)).unwrap();
        assert!(c.step(trained(1.0, 0.5)).is_err());
    }

    #[test]
    fn stale_messages_are_ignored() {
        let mut c = machine(DispatchScope::ParticipantsOnly, PolicyKind::GlobalMax, 3);
        c.step(ClientEvent::Start).unwrap();
        c.step(trained(1.0, 0.9)).unwrap();
        c.step(reply(1, 0.1)).unwrap();
        c.step(global(1, 2.0)).unwrap();
        // Now in round 2. Leftovers from round 1 do nothing.
        assert!(c.step(closed(1)).unwrap().is_empty());
        assert!(c.step(global(1, 9.9)).unwrap().is_empty());
        assert!(c.step(reply(1, 0.3)).unwrap().is_empty());
        assert_eq!(c.params(), &params(2.0));
    }
}
