"""Unit conversions. All internal math is SI; mph appears only at the
ACC speed-setting boundary."""

MPH_TO_MPS = 0.44704  # exact by definition
METERS_PER_MILE = 1609.344  # exact by definition


def mph_to_mps(mph):
    return mph * MPH_TO_MPS


def mps_to_mph(mps):
    return mps / MPH_TO_MPS
