#include <math.h>
#include <stdio.h>
#include <string.h>

#include "beamcast.h"

static int fail(const char *what) {
    char msg[512];
    bc_last_error_message(msg, sizeof msg, NULL);
    fprintf(stderr, "%s: %s\n", what, msg);
    return 1;
}

int main(void) {
    double p = 0.0;
    uint8_t certain = 0;
    if (bc_conflict_probability(4, 2, 0, &p, &certain) != BC_STATUS_OK || fabs(p - 0.75) > 1e-15)
        return fail("conflict");

    BcConfig *cfg = NULL;
    const char *toml = "array_vertical = 2\narray_horizontal = 2\nlowres_vertical = 1\n"
                       "lowres_horizontal = 1\nue_count = 2\nframes = 3\nwindow = 1\n";
    if (bc_config_from_toml(toml, &cfg) != BC_STATUS_OK)
        return fail("config");

    BcChannels *ch = NULL;
    if (bc_channels_oracle(cfg, 1, 0, &ch) != BC_STATUS_OK)
        return fail("channels");

    BcAllocation *opt = NULL;
    if (bc_enumerate_optimal(ch, 0.0158, 1e-11, BC_INTERFERENCE_OWN_CHANNEL, BC_POWER_MODE_SUM_RATE, &opt) != BC_STATUS_OK)
        return fail("optimal");

    size_t beams[2];
    double power[2];
    if (bc_allocation_beams(opt, beams, 2) != BC_STATUS_OK || bc_allocation_power(opt, power, 2) != BC_STATUS_OK)
        return fail("allocation");
    if (beams[0] == beams[1] || power[0] + power[1] > 0.0158 * (1 + 1e-9))
        return fail("feasibility");

    if (bc_config_from_toml("ue_count = 0\n", &cfg) != BC_STATUS_CONFIG)
        return 1;

    printf("sum_rate=%.6f beams=%zu,%zu\n", bc_allocation_sum_rate(opt), beams[0], beams[1]);
    bc_allocation_free(opt);
    bc_channels_free(ch);
    bc_config_free(cfg);
    return 0;
}
