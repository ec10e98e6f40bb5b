#include <math.h>
#include <stdio.h>
#include "tubecalc.h"

int main(void) {
    TcEngine *engine = NULL;
    TcDistribution *delta = NULL, *d1 = NULL;
    TcTestFn *phi = NULL;
    TcPairing out;

    if (tc_engine_sphere(3, 1.0, &engine) != TC_STATUS_OK) return 10;
    if (tc_engine_set_levels(engine, 16, 2, 32) != TC_STATUS_OK) return 11;
    if (tc_dist_delta(0, &delta) != TC_STATUS_OK) return 12;
    if (tc_dist_derivative(engine, delta, 1, &d1) != TC_STATUS_OK) return 13;
    if (tc_testfn_normal_component(1, 0.5, &phi) != TC_STATUS_OK) return 14;
    if (tc_pair(engine, d1, phi, 0.0, &out) != TC_STATUS_OK) return 15;
    double expected = -8.0 * M_PI / 3.0;
    printf("%.16e\n", out.value);
    if (fabs(out.value - expected) > 1e-8) return 16;
    if (tc_dist_derivative(engine, delta, 7, &d1) != TC_STATUS_INVALID_ARGUMENT) return 17;
    if (tc_last_error() == NULL) return 18;
    tc_testfn_free(phi);
    tc_dist_free(d1);
    tc_dist_free(delta);
    tc_engine_free(engine);
    return 0;
}
