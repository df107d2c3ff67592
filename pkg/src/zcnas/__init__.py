"""Training-free architecture search for accelerometer time-series classifiers.

Sample random CNN/LSTM architectures, score each untrained model with
zero-cost proxies from a single data batch, optionally train a subset in
full, and measure how well the proxy rankings predict trained F1.
"""

__version__ = "0.1.0"
