"""
Figures measured on the operator's full data set and on external surveys.
They cannot be reproduced without the proprietary logs and are reported next
to computed values for comparison only.
"""

# daily inter-district trips: detected estimate vs household survey
DAILY_INTER_DISTRICT_TRIPS = 7.8e6
SURVEY_DAILY_TRIPS = 7.9e6

# daily inter-district passengers by mode
PUBLIC_PASSENGERS = 3.5e6
PRIVATE_PASSENGERS = 4.3e6

# overall public/private split: estimate vs transport authority
PUBLIC_SPLIT = 0.45
AUTHORITY_PUBLIC_SPLIT = 0.44

# share of intra-district trips: survey vs detected
SURVEY_INTRA_DISTRICT_SHARE = 0.20
DETECTED_INTRA_DISTRICT_SHARE = 0.04

# public share of inter-district trips per time window
MODE_SHARE = {"morning": 0.38, "midday": 0.44, "evening": 0.52}

# overall share of very frequent users among detected places
FREQUENT_SHARE = 0.34

# mean intra-district trip length and the average district side length
INTRA_DISTRICT_DISTANCE_M = 1900.0
DISTRICT_SIDE_M = 3600.0

# trips shorter than this cannot be detected from cellphone positions
DETECTABILITY_FLOOR_M = 2000.0


def as_dict() -> dict:
    return {
        "daily_inter_district_trips": DAILY_INTER_DISTRICT_TRIPS,
        "survey_daily_trips": SURVEY_DAILY_TRIPS,
        "public_passengers": PUBLIC_PASSENGERS,
        "private_passengers": PRIVATE_PASSENGERS,
        "public_split": PUBLIC_SPLIT,
        "authority_public_split": AUTHORITY_PUBLIC_SPLIT,
        "survey_intra_district_share": SURVEY_INTRA_DISTRICT_SHARE,
        "detected_intra_district_share": DETECTED_INTRA_DISTRICT_SHARE,
        "mode_share": MODE_SHARE,
        "frequent_share": FREQUENT_SHARE,
        "intra_district_distance_m": INTRA_DISTRICT_DISTANCE_M,
    }
