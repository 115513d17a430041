//! Stream and path scheduling, including the congestion window reservation ledger.

pub mod path;
pub mod reservation;
pub mod stream;

pub use path::{
    background_admissible, background_select, by_srtt, cwr_select, cwred_select,
    decide_duplication, lowrtt_select, priority_select, register_reservation, retransmit_select,
    PathChoice, PathSchedulerKind,
};
pub use reservation::{
    predicted_free, reservation_at_risk, Reservation, ReservationBook, ReservationDiagnostics,
    ReservationState,
};
pub use stream::{
    pfifo_next_stream, pfifo_order, rr_next_stream, rr_order, Candidate, CandidateKind, OutMessage,
    RetransmitFrame, SendStream, StreamData, StreamScheduler, StreamSchedulerKind,
};
