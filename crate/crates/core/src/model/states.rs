/// Name, postal abbreviation and two-digit code of a state or territory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateInfo {
    pub name: &'static str,
    pub abbrev: &'static str,
    pub fips: &'static str,
}

const fn s(name: &'static str, abbrev: &'static str, fips: &'static str) -> StateInfo {
    StateInfo { name, abbrev, fips }
}

pub static STATES: &[StateInfo] = &[
    s("Alabama", "AL", "01"),
    s("Alaska", "AK", "02"),
    s("Arizona", "AZ", "04"),
    s("Arkansas", "AR", "05"),
    s("California", "CA", "06"),
    s("Colorado", "CO", "08"),
    s("Connecticut", "CT", "09"),
    s("Delaware", "DE", "10"),
    s("District of Columbia", "DC", "11"),
    s("Florida", "FL", "12"),
    s("Georgia", "GA", "13"),
    s("Hawaii", "HI", "15"),
    s("Idaho", "ID", "16"),
    s("Illinois", "IL", "17"),
    s("Indiana", "IN", "18"),
    s("Iowa", "IA", "19"),
    s("Kansas", "KS", "20"),
    s("Kentucky", "KY", "21"),
    s("Louisiana", "LA", "22"),
    s("Maine", "ME", "23"),
    s("Maryland", "MD", "24"),
    s("Massachusetts", "MA", "25"),
    s("Michigan", "MI", "26"),
    s("Minnesota", "MN", "27"),
    s("Mississippi", "MS", "28"),
    s("Missouri", "MO", "29"),
    s("Montana", "MT", "30"),
    s("Nebraska", "NE", "31"),
    s("Nevada", "NV", "32"),
    s("New Hampshire", "NH", "33"),
    s("New Jersey", "NJ", "34"),
    s("New Mexico", "NM", "35"),
    s("New York", "NY", "36"),
    s("North Carolina", "NC", "37"),
    s("North Dakota", "ND", "38"),
    s("Ohio", "OH", "39"),
    s("Oklahoma", "OK", "40"),
    s("Oregon", "OR", "41"),
    s("Pennsylvania", "PA", "42"),
    s("Rhode Island", "RI", "44"),
    s("South Carolina", "SC", "45"),
    s("South Dakota", "SD", "46"),
    s("Tennessee", "TN", "47"),
    s("Texas", "TX", "48"),
    s("Utah", "UT", "49"),
    s("Vermont", "VT", "50"),
    s("Virginia", "VA", "51"),
    s("Washington", "WA", "53"),
    s("West Virginia", "WV", "54"),
    s("Wisconsin", "WI", "55"),
    s("Wyoming", "WY", "56"),
    s("American Samoa", "AS", "60"),
    s("Guam", "GU", "66"),
    s("Northern Mariana Islands", "MP", "69"),
    s("Puerto Rico", "PR", "72"),
    s("Virgin Islands", "VI", "78"),
];

pub fn state_by_fips(code: &str) -> Option<&'static StateInfo> {
    STATES.iter().find(|s| s.fips == code)
}

pub fn state_by_abbrev(abbrev: &str) -> Option<&'static StateInfo> {
    STATES.iter().find(|s| s.abbrev.eq_ignore_ascii_case(abbrev))
}

pub fn state_by_name(name: &str) -> Option<&'static StateInfo> {
    STATES
        .iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .or(match name {
            "Washington, D.C." | "Washington DC" => state_by_fips("11"),
            "United States Virgin Islands" | "U.S. Virgin Islands" => state_by_fips("78"),
            _ => None,
        })
}
