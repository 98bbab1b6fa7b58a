# qkd-rate: certified lower bounds on QKD key rates
