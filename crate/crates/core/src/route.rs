//! Route state machine.
//!
//! ```text
//! Pending -> Approved -> InTransit -> (AwaitingApproval -> InTransit)* -> Completed
//! ```
//!
//! `Rejected` and `Blocked` are terminal. `Rejected` is reachable from
//! `Pending` (an approval veto), `InTransit` and `AwaitingApproval`; `Blocked`
//! from `InTransit` and `AwaitingApproval`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RouteStatus {
    Pending,
    Approved,
    InTransit,
    AwaitingApproval,
    Completed,
    Rejected,
    Blocked,
}

impl RouteStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Completed | Self::Rejected | Self::Blocked)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    stations: Vec<String>,
    cursor: usize,
    status: RouteStatus,
}

impl Route {
    pub fn new(stations: Vec<String>) -> Result<Self, ProtocolError> {
        if stations.is_empty() {
            return Err(ProtocolError::EmptyRoute);
        }
        let mut seen = HashSet::new();
        for id in &stations {
            if !seen.insert(id.as_str()) {
                return Err(ProtocolError::DuplicateStation(id.clone()));
            }
        }
        Ok(Self {
            stations,
            cursor: 0,
            status: RouteStatus::Pending,
        })
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn status(&self) -> RouteStatus {
        self.status
    }

    /// Station the train is currently waiting at, if it still has hops left.
    pub fn current_station(&self) -> Option<&str> {
        self.stations.get(self.cursor).map(String::as_str)
    }

    /// Station after the current one; `None` on the last hop.
    pub fn next_station(&self) -> Option<&str> {
        self.stations.get(self.cursor + 1).map(String::as_str)
    }

    pub fn is_last_hop(&self) -> bool {
        self.cursor + 1 == self.stations.len()
    }

    /// Checks every invariant; used after decoding untrusted bytes.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        Route::new(self.stations.clone())?;
        let n = self.stations.len();
        if self.cursor > n {
            return Err(ProtocolError::Invalid(format!("cursor {} beyond route of {n}", self.cursor)));
        }
        if (self.status == RouteStatus::Completed) != (self.cursor == n) {
            return Err(ProtocolError::Invalid(format!(
                "status {:?} inconsistent with cursor {} of {n}",
                self.status, self.cursor
            )));
        }
        Ok(())
    }

    fn illegal(&self, op: &'static str) -> ProtocolError {
        ProtocolError::IllegalTransition {
            op,
            from: self.status,
            cursor: self.cursor,
            len: self.stations.len(),
        }
    }

    fn with_status(&self, status: RouteStatus) -> Self {
        Self {
            status,
            ..self.clone()
        }
    }

    pub fn approve(&self) -> Result<Self, ProtocolError> {
        match self.status {
            RouteStatus::Pending => Ok(self.with_status(RouteStatus::Approved)),
            _ => Err(self.illegal("approve")),
        }
    }

    pub fn dispatch(&self) -> Result<Self, ProtocolError> {
        match self.status {
            RouteStatus::Approved => Ok(self.with_status(RouteStatus::InTransit)),
            _ => Err(self.illegal("dispatch")),
        }
    }

    /// The station at the cursor has taken delivery and is working the hop.
    pub fn hold(&self) -> Result<Self, ProtocolError> {
        match self.status {
            RouteStatus::InTransit if self.cursor < self.stations.len() => {
                Ok(self.with_status(RouteStatus::AwaitingApproval))
            }
            _ => Err(self.illegal("hold")),
        }
    }

    /// The station at the cursor released its hop after admin approval.
    pub fn release(&self) -> Result<Self, ProtocolError> {
        match self.status {
            RouteStatus::AwaitingApproval => Ok(self.with_status(RouteStatus::InTransit)),
            _ => Err(self.illegal("release")),
        }
    }

    pub fn advance(&self) -> Result<Self, ProtocolError> {
        let n = self.stations.len();
        if self.status != RouteStatus::InTransit || self.cursor >= n {
            return Err(self.illegal("advance"));
        }
        let cursor = self.cursor + 1;
        let status = if cursor == n {
            RouteStatus::Completed
        } else {
            self.status
        };
        Ok(Self {
            stations: self.stations.clone(),
            cursor,
            status,
        })
    }

    pub fn reject(&self) -> Result<Self, ProtocolError> {
        match self.status {
            RouteStatus::Pending | RouteStatus::InTransit | RouteStatus::AwaitingApproval => {
                Ok(self.with_status(RouteStatus::Rejected))
            }
            _ => Err(self.illegal("reject")),
        }
    }

    pub fn block(&self) -> Result<Self, ProtocolError> {
        match self.status {
            RouteStatus::InTransit | RouteStatus::AwaitingApproval => {
                Ok(self.with_status(RouteStatus::Blocked))
            }
            _ => Err(self.illegal("block")),
        }
    }
}

/// Move the cursor past the current station. Requires `InTransit` with hops
/// remaining; reaching the end of the route marks it `Completed`.
pub fn advance_route(route: &Route) -> Result<Route, ProtocolError> {
    route.advance()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use regex::Regex;

    use super::*;

    fn two() -> Route {
        Route::new(vec!["s1".into(), "s2".into()]).unwrap()
    }

    fn in_transit(route: Route) -> Route {
        route.approve().unwrap().dispatch().unwrap()
    }

    #[test]
    fn advance_first_of_two() {
        let r = advance_route(&in_transit(two())).unwrap();
        assert_eq!((r.cursor(), r.status()), (1, RouteStatus::InTransit));
    }

    #[test]
    fn advance_last_of_two_completes() {
        let r = advance_route(&advance_route(&in_transit(two())).unwrap()).unwrap();
        assert_eq!((r.cursor(), r.status()), (2, RouteStatus::Completed));
        r.validate().unwrap();
    }

    #[test]
    fn advance_completed_is_illegal() {
        let r = advance_route(&advance_route(&in_transit(two())).unwrap()).unwrap();
        assert!(matches!(advance_route(&r), Err(ProtocolError::IllegalTransition { .. })));
    }

    #[test]
    fn advance_requires_in_transit() {
        assert!(advance_route(&two()).is_err());
        let held = in_transit(two()).hold().unwrap();
        assert!(advance_route(&held).is_err());
    }

    #[test]
    fn construction_errors() {
        assert_eq!(Route::new(vec![]), Err(ProtocolError::EmptyRoute));
        assert_eq!(
            Route::new(vec!["a".into(), "b".into(), "a".into()]),
            Err(ProtocolError::DuplicateStation("a".into()))
        );
    }

    #[test]
    fn terminal_states_accept_nothing() {
        let rejected = two().reject().unwrap();
        assert!(rejected.approve().is_err());
        assert!(rejected.reject().is_err());
        let blocked = in_transit(two()).block().unwrap();
        assert!(blocked.dispatch().is_err());
        assert!(blocked.hold().is_err());
    }

    #[derive(Debug, Clone, Copy)]
    enum Op {
        Approve,
        Dispatch,
        Hold,
        Release,
        Advance,
        Reject,
        Block,
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            Just(Op::Approve),
            Just(Op::Dispatch),
            Just(Op::Hold),
            Just(Op::Release),
            Just(Op::Advance),
            Just(Op::Reject),
            Just(Op::Block),
        ]
    }

    fn letter(s: RouteStatus) -> char {
        match s {
            RouteStatus::Pending => 'P',
            RouteStatus::Approved => 'A',
            RouteStatus::InTransit => 'I',
            RouteStatus::AwaitingApproval => 'W',
            RouteStatus::Completed => 'C',
            RouteStatus::Rejected => 'R',
            RouteStatus::Blocked => 'B',
        }
    }

    proptest! {
        #[test]
        fn observed_status_words_stay_in_the_language(
            n in 1usize..5,
            ops in proptest::collection::vec(op(), 0..40),
        ) {
            // One letter per observed change; a repeated I is a cursor advance.
            let language = Regex::new(r"^P(R|A(I(WI|I)*(W|W?[RB]|C)?)?)?$").unwrap();
            let mut route = Route::new((0..n).map(|i| format!("s{i}")).collect()).unwrap();
            let mut word = String::from(letter(route.status()));
            for op in ops {
                let next = match op {
                    Op::Approve => route.approve(),
                    Op::Dispatch => route.dispatch(),
                    Op::Hold => route.hold(),
                    Op::Release => route.release(),
                    Op::Advance => route.advance(),
                    Op::Reject => route.reject(),
                    Op::Block => route.block(),
                };
                if let Ok(next) = next {
                    prop_assert!(next.validate().is_ok());
                    if next.status() != route.status() || next.cursor() != route.cursor() {
                        word.push(letter(next.status()));
                    }
                    route = next;
                }
            }
            prop_assert!(language.is_match(&word), "word {word} not accepted");
            prop_assert!(route.cursor() <= n);
        }
    }
}
