//! EviBound: a workflow-governance engine that makes task promotion
//! evidence-bound.
//!
//! Every task runs between two gates. The approval gate statically validates
//! the task's acceptance contract (structure, checkability, placeholder
//! absence) and requires three-reviewer consensus before execution. The
//! verification gate then binds the claimed run id to evidence in a run
//! store — queryable run, FINISHED status, every contract artifact present,
//! metrics inside their intervals — before any success claim enters the
//! claims ledger. Failures route to bounded, confidence-gated retry phases;
//! the ledger can be independently re-audited at any time.

pub mod approval;
pub mod bench;
pub mod clock;
pub mod config;
pub mod contract;
pub mod ledger;
pub mod pipeline;
pub mod reflection;
pub mod store;
pub mod verify;
