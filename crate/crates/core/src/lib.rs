//! Exact simulation of tripartite correlations produced by networks of PR boxes.
//!
//! Three parties (Alice, Bob, Charlie) each hold halves of PR boxes shared
//! pairwise with the other two. A party's measurement is a wiring: a decision
//! tree that decides which box to query next and with which input, followed by
//! a table mapping the box outputs to a final outcome in `{0, +}`.
//!
//! The crate builds the unique joint distribution of all box outputs, derives
//! the observable behavior `P(ABC|XYZ)`, audits no-signaling, evaluates the
//! tripartite Bell functional (whose network bound is `1/8`), performs the
//! strategy surgeries used to bound it, and certifies the companion
//! no-signaling bound with an exact rational simplex solver.
//!
//! Module map:
//!
//! * [`boxes`]: single PR-box semantics and the correlated-box signaling demo.
//! * [`strategy`]: decision trees, output tables, validation, JSON format.
//! * [`joint`]: joint distribution of box outputs and ordering invariance.
//! * [`behavior`]: observable behaviors, no-signaling audit, Monte Carlo.
//! * [`bell`]: the Bell functional and the quantum behavior that violates it.
//! * [`transform`]: derandomization and fixed-output surgeries.
//! * [`lp`]: exact simplex over the no-signaling polytope.
//! * [`search`]: exhaustive, random and local search over strategies.
//! * [`cli`]: the `prnet` command-line front end.

pub mod behavior;
pub mod bell;
pub mod boxes;
pub mod cli;
pub mod dyadic;
pub mod joint;
pub mod lp;
pub mod search;
pub mod strategy;
pub mod transform;

pub use behavior::{Behavior, ExactBehavior, FloatBehavior, Mode, OutcomeTriple, Prob};
pub use boxes::{pr_determined_output, Bit, BoxQuery};
pub use dyadic::Dyadic;
pub use joint::{FullAssignment, JointDistribution, PartyOrdering, SettingTriple, Slot};
pub use strategy::{
    BitStr, BoxCounts, BoxRef, DecisionNode, NetworkStrategy, Outcome, PartyId, PartyStrategy,
};
