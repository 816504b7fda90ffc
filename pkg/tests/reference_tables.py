"""Reference accuracy, timing and 10-day forecast tables for Bitcoin, used as fixtures.

Values are rounded as reported: one decimal for USD, two for percent.
"""

WINDOWS = (5, 10, 15, 20, 25)

# (w, mse, rmse, mae, mape)
ACCURACY = {
    "gru": [
        (5, 49334.9, 222.1, 120.2, 2.0),
        (10, 50941.0, 225.7, 127.2, 2.6),
        (15, 54575.6, 233.6, 136.0, 2.6),
        (20, 61648.1, 248.3, 143.3, 3.2),
        (25, 63330.9, 251.7, 165.4, 3.9),
    ],
    "lstm": [
        (5, 121202.8, 348.1, 143.8, 3.2),
        (10, 122310.3, 349.7, 147.6, 3.5),
        (15, 122560.9, 350.0, 150.8, 3.7),
        (20, 133676.5, 365.6, 168.3, 4.1),
        (25, 146133.4, 382.2, 170.3, 4.2),
    ],
}

# Training wall-clock (mm:ss) for one full training run per window length.
TIMING = {
    "gru": ("10:58", "11:37", "12:18", "12:56", "13:43"),
    "lstm": ("12:51", "13:29", "14:27", "15:03", "15:49"),
}

TRUE_10_DAY = (33515.7, 35485.2, 37646.8, 36982.1, 38297.6,
               39256.6, 38852.9, 46395.7, 46508.6, 44836.0)

# (pred, abs_err, abs_pct_err) per day
FORECAST_10_DAY = {
    "gru": [
        (33174.3, 341.4, 1.02), (35913.2, 428.0, 1.21), (37837.7, 190.9, 0.51),
        (39913.6, 2931.5, 7.93), (37145.8, 1151.8, 3.01), (36810.9, 2445.7, 6.23),
        (37646.1, 1206.8, 3.11), (43232.2, 3163.5, 6.82), (42189.7, 4318.9, 9.29),
        (40245.3, 4590.7, 10.24),
    ],
    "lstm": [
        (32756.6, 759.1, 2.26), (36062.5, 577.3, 1.62), (38116.5, 469.7, 1.24),
        (38502.0, 1520.0, 4.11), (37314.4, 983.2, 2.56), (36746.4, 2511.2, 6.39),
        (36651.5, 2201.4, 5.66), (39437.6, 6958.1, 14.99), (39265.4, 7243.2, 15.57),
        (37784.1, 7051.9, 15.72),
    ],
}


def seconds(mmss: str) -> int:
    minutes, secs = mmss.split(":")
    return 60 * int(minutes) + int(secs)

# (cell, day) rows whose reported abs_err disagrees with pred - true beyond rounding.
ERRATA = {("lstm", 4), ("lstm", 6)}
