int hash_init(void)
{
#if defined(CONFIG_NET) && defined(CONFIG_CRYPTO)
	return 1;
#endif
	return 0;
}
