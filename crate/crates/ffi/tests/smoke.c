#include <stdio.h>
#include "spectral_gng.h"

int main(void) {
    double pts[40][2];
    for (int i = 0; i < 40; i++) {
        pts[i][0] = (i < 20 ? 0.0 : 10.0) + (i % 5) * 0.1;
        pts[i][1] = (i % 7) * 0.1;
    }
    SgConfig *cfg = sg_config_new();
    sg_config_set_seed(cfg, 1);
    sg_config_set_neurons(cfg, 10);
    SgResult *res = NULL;
    SgStatus st = sg_cluster_points(&pts[0][0], 40, 2, cfg, &res);
    if (st != SG_STATUS_OK) {
        fprintf(stderr, "cluster failed: %s\n", sg_last_error_message());
        return 1;
    }
    size_t labels[40];
    if (sg_result_labels(res, labels, 40) != SG_STATUS_OK) return 2;
    for (int i = 1; i < 40; i++) {
        if ((labels[i] == labels[0]) != (i < 20)) return 3;
    }
    printf("k=%zu version=%s\n", sg_result_chosen_k(res), sg_version());
    sg_result_free(res);
    sg_config_free(cfg);
    return 0;
}
