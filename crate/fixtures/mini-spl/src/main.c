#include "driver.h"
#include "../include/config.h"

int main(void)
{
	int rc = driver_init();
#ifdef CONFIG_NET
	rc += net_init();
#endif
	// #ifdef CONFIG_CRYPTO is only mentioned here
	return rc;
}
