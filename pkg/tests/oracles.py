"""Independent reference computations shared by the tests."""
import mpmath as mp


def maclaurin_ai(x, dps=80, derivative=False):
    """Ai / Ai' from the Maclaurin series summed in extended precision.

    At 80 digits the cancellation between terms for |x| <= 20 is harmless,
    which makes this an independent oracle for the double-precision code.
    """
    with mp.workdps(dps):
        x = mp.mpf(x)
        c1 = 1 / (mp.power(3, mp.mpf(2) / 3) * mp.gamma(mp.mpf(2) / 3))
        c2 = -1 / (mp.power(3, mp.mpf(1) / 3) * mp.gamma(mp.mpf(1) / 3))
        a = [c1, c2, mp.mpf(0)]
        k = 3
        while True:
            a.append(a[k - 3] / (k * (k - 1)))
            if k > 40 and max(abs(a[k]), abs(a[k - 1])) * (abs(x) + 1) ** k < mp.mpf(10) ** (-dps + 5):
                break
            k += 1
        if derivative:
            val = mp.fsum(j * a[j] * x ** (j - 1) for j in range(1, len(a)))
        else:
            val = mp.fsum(a[j] * x ** j for j in range(len(a)))
        return float(val)
