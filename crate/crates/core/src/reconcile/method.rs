use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covariance::Framework;

/// Which dimension is reconciled first. `Cst`: cross-sectional then
/// temporal; `Tcs`: temporal then cross-sectional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Cst,
    Tcs,
}

impl Order {
    pub fn flip(self) -> Order {
        match self {
            Order::Cst => Order::Tcs,
            Order::Tcs => Order::Cst,
        }
    }

    pub fn first_framework(self) -> Framework {
        match self {
            Order::Cst => Framework::Cs,
            Order::Tcs => Framework::Te,
        }
    }

    pub fn last_framework(self) -> Framework {
        self.flip().first_framework()
    }

    fn suffix(self) -> &'static str {
        match self {
            Order::Cst => "cst",
            Order::Tcs => "tcs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Cs,
    Te,
    Oct,
    Seq(Order),
    Ka(Order),
    Ite(Order),
    Bu,
    PersBu,
}

/// Which constraints a method's output satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Profile {
    pub cs: bool,
    pub te: bool,
}

impl Profile {
    pub const BOTH: Profile = Profile { cs: true, te: true };
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Cs,
        Method::Te,
        Method::Oct,
        Method::Seq(Order::Cst),
        Method::Seq(Order::Tcs),
        Method::Ka(Order::Cst),
        Method::Ka(Order::Tcs),
        Method::Ite(Order::Cst),
        Method::Ite(Order::Tcs),
        Method::Bu,
        Method::PersBu,
    ];

    pub fn name(self) -> String {
        match self {
            Method::Cs => "cs".into(),
            Method::Te => "te".into(),
            Method::Oct => "oct".into(),
            Method::Seq(o) => format!("seq-{}", o.suffix()),
            Method::Ka(o) => format!("ka-{}", o.suffix()),
            Method::Ite(o) => format!("ite-{}", o.suffix()),
            Method::Bu => "bu".into(),
            Method::PersBu => "pers-bu".into(),
        }
    }

    /// Constraint profile. The iterative methods are exact in their last
    /// dimension and coherent in the other up to the stopping tolerance.
    pub fn profile(self) -> Profile {
        match self {
            Method::Cs => Profile { cs: true, te: false },
            Method::Te => Profile { cs: false, te: true },
            Method::Seq(Order::Cst) => Profile { cs: false, te: true },
            Method::Seq(Order::Tcs) => Profile { cs: true, te: false },
            Method::Oct | Method::Ka(_) | Method::Ite(_) | Method::Bu | Method::PersBu => Profile::BOTH,
        }
    }

    pub fn is_ct_coherent(self) -> bool {
        self.profile() == Profile::BOTH
    }

    pub fn is_iterative(self) -> bool {
        matches!(self, Method::Ite(_))
    }

    /// Methods that never read a covariance.
    pub fn is_baseline(self) -> bool {
        matches!(self, Method::Bu | Method::PersBu)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| {
                let names: Vec<String> = Method::ALL.iter().map(|m| m.name()).collect();
                format!("unknown method {s:?} (expected one of {})", names.join(", "))
            })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("ITE_TCS".parse::<Method>().unwrap(), Method::Ite(Order::Tcs));
        assert!("mint".parse::<Method>().is_err());
    }

    #[test]
    fn sequential_profiles_follow_the_last_dimension() {
        assert!(!Method::Seq(Order::Cst).profile().cs);
        assert!(Method::Seq(Order::Cst).profile().te);
        assert!(Method::Seq(Order::Tcs).profile().cs);
        assert_eq!(Order::Cst.last_framework(), Framework::Te);
    }
}
